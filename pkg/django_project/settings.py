"""
Django settings for the p2e-mec project.

The project has no web surface; Django provides settings, the management
command CLI and the test runner.

Environment variables (optionally from a ``.env`` file next to manage.py):
    MEC_OUTPUT_DIR  default directory for run and campaign outputs
    MEC_LOG_LEVEL   level of the ``core`` logger (default INFO)
    MEC_WORKERS     default worker processes for sweeps (default 1)
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / '.env')

SECRET_KEY = os.environ.get('SECRET_KEY', 'p2e-mec-local-only')

DEBUG = os.environ.get('DEBUG', 'False').lower() in ('true', '1', 'yes')

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'core',
]

# Default: SQLite for local development; no model uses it
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Experiment outputs
MEC_OUTPUT_DIR = os.environ.get('MEC_OUTPUT_DIR', str(BASE_DIR / 'runs'))
MEC_LOG_LEVEL = os.environ.get('MEC_LOG_LEVEL', 'INFO').upper()
MEC_WORKERS = int(os.environ.get('MEC_WORKERS', '1'))

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'core': {
            'handlers': ['console'],
            'level': MEC_LOG_LEVEL,
            'propagate': False,
        },
        'django': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': True,
        },
    },
}
