"""
Django settings for the ssp_lab project.

The project has no web surface and no database. Django provides the settings
layer, logging configuration, app registry, management commands and the test
runner; Celery runs benchmark sweeps.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'ssp-lab-local-only-key')

# Default to False - must explicitly set DEBUG=True in development
DEBUG = os.getenv('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'problems',
    'geometry',
    'solvers',
    'builders',
    'harness',
    'oracles',
]

# No persistent storage: problems, traces and reports are files.
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = os.getenv('TIME_ZONE', 'UTC')
USE_I18N = False
USE_TZ = True



# ============================================================================
# SOLVER DEFAULTS
# ============================================================================

# Every value can be overridden per run through the `ssp` management command.
SSP_DEFAULTS = {
    'BETA': float(os.getenv('SSP_BETA', '1.96')),
    'DELTA': float(os.getenv('SSP_DELTA', '1.96')),
    'LS_TOLERANCE': float(os.getenv('SSP_LS_TOLERANCE', '1e-3')),
    'SVM_TOLERANCE': float(os.getenv('SSP_SVM_TOLERANCE', '1e-2')),
    'MAX_EPOCHS': int(os.getenv('SSP_MAX_EPOCHS', '1000')),
    'MAX_ITERATIONS': int(os.getenv('SSP_MAX_ITERATIONS', '100000')),
    'LOG_EVERY': int(os.getenv('SSP_LOG_EVERY', '1000')),
    'SEED': int(os.getenv('SSP_SEED', '0')),
    'LAMBDA': float(os.getenv('SSP_LAMBDA', '0.1')),
    'RHO': float(os.getenv('SSP_RHO', '0.3')),
    'GAMMA': float(os.getenv('SSP_GAMMA', '0.5')),
    'PANEL_SIZE': int(os.getenv('SSP_PANEL_SIZE', '1000')),
    'TRAIN_FRACTION': float(os.getenv('SSP_TRAIN_FRACTION', '0.8')),
    'TRACE_DIR': os.getenv('SSP_TRACE_DIR', str(BASE_DIR / 'traces')),
}


# Celery Configuration
# Sweeps run in-process unless a broker is configured and eager mode is off.
CELERY_BROKER_URL = os.getenv('CELERY_BROKER_URL', 'redis://localhost:6379/0')
CELERY_RESULT_BACKEND = os.getenv('CELERY_RESULT_BACKEND', 'redis://localhost:6379/0')
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = TIME_ZONE
CELERY_TASK_TRACK_STARTED = True
CELERY_TASK_TIME_LIMIT = 30 * 60  # 30 minutes
CELERY_TASK_ALWAYS_EAGER = os.getenv('CELERY_TASK_ALWAYS_EAGER', 'True') == 'True'
CELERY_TASK_EAGER_PROPAGATES = True


# ============================================================================
# LOGGING CONFIGURATION
# ============================================================================

# All logs stream to stderr through a single console handler.
SSP_LOG_LEVEL = os.getenv('SSP_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '[{levelname}] {asctime} {module} - {message}',
            'style': '{',
            'datefmt': '%Y-%m-%d %H:%M:%S',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
            'level': 'DEBUG',
        },
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'WARNING',
            'propagate': False,
        },
        'problems': {
            'handlers': ['console'],
            'level': SSP_LOG_LEVEL,
            'propagate': False,
        },
        'geometry': {
            'handlers': ['console'],
            'level': SSP_LOG_LEVEL,
            'propagate': False,
        },
        'solvers': {
            'handlers': ['console'],
            'level': SSP_LOG_LEVEL,
            'propagate': False,
        },
        'builders': {
            'handlers': ['console'],
            'level': SSP_LOG_LEVEL,
            'propagate': False,
        },
        'harness': {
            'handlers': ['console'],
            'level': SSP_LOG_LEVEL,
            'propagate': False,
        },
        'oracles': {
            'handlers': ['console'],
            'level': SSP_LOG_LEVEL,
            'propagate': False,
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
}


# ============================================================================
# SENTRY ERROR TRACKING
# ============================================================================

# Initialize Sentry for long-running sweeps outside development
if not DEBUG and os.getenv('SENTRY_DSN'):
    import sentry_sdk
    from sentry_sdk.integrations.celery import CeleryIntegration
    from sentry_sdk.integrations.django import DjangoIntegration

    sentry_sdk.init(
        dsn=os.getenv('SENTRY_DSN'),
        integrations=[
            DjangoIntegration(),
            CeleryIntegration(),
        ],

        # Performance monitoring disabled
        traces_sample_rate=0.0,

        # Don't send personally identifiable information
        send_default_pii=False,

        environment=os.getenv('SSP_ENVIRONMENT', 'production'),
        release=os.getenv('SENTRY_RELEASE', None),
        sample_rate=float(os.getenv('SENTRY_SAMPLE_RATE', '1.0')),
        max_breadcrumbs=20,
    )
