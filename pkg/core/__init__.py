# Environment, agents and experiment harness for play-to-earn MEC
