# Management commands directory