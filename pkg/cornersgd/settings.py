"""
Django settings for cornersgd project.

The project has no web surface: it is driven through management commands
(theory, train, phase, contour, fit). Settings hold the numerical defaults
and logging configuration shared by every app.

For more information on this file, see
https://docs.djangoproject.com/en/4.2/topics/settings/
"""

from pathlib import Path
import os


from dotenv import load_dotenv
dotenv_path = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".env"))
load_dotenv(dotenv_path)

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


SECRET_KEY = os.environ.get("SECRET_KEY", "cornersgd")

DEBUG = bool(int(os.environ.get("DEBUG", 0)))

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'django_guid',
    'spectrum',
    'contour',
    'propagator',
    'corner_theory',
    'trainer',
    'cli',
]

# No tables are used; runs are files on disk.
DATABASES = {}


# Internationalization
# https://docs.djangoproject.com/en/4.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Experiment defaults

CORNER_SGD_THREADS = int(os.environ.get("CORNER_SGD_THREADS", os.cpu_count() or 1))
CORNER_SGD_OUTPUT_DIR = os.environ.get("CORNER_SGD_OUTPUT_DIR", "runs")

CONTOUR_GRID = int(os.environ.get("CONTOUR_GRID", 4096))
CONTOUR_RADIUS_MARGIN = float(os.environ.get("CONTOUR_RADIUS_MARGIN", 24.0))
# Loss outputs are accurate to about 1e-6 relative; aliasing below 1e-7 of the kept
# coefficients does not show in them.
CONTOUR_LEAKAGE_WARNING = float(os.environ.get("CONTOUR_LEAKAGE_WARNING", 1e-7))

ML_SERIES_RADIUS = float(os.environ.get("ML_SERIES_RADIUS", 5.0))
ML_ASYMPTOTIC_RADIUS = float(os.environ.get("ML_ASYMPTOTIC_RADIUS", 1000.0))
COEFFICIENT_NODES = int(os.environ.get("COEFFICIENT_NODES", 400))

EVAL_POINTS_PER_DECADE = int(os.environ.get("EVAL_POINTS_PER_DECADE", 40))
DIVERGENCE_FACTOR = float(os.environ.get("DIVERGENCE_FACTOR", 1e6))
SMOOTHING_WIDTH = float(os.environ.get("SMOOTHING_WIDTH", 1.15))
UNCLASSIFIABLE_MARGIN = float(os.environ.get("UNCLASSIFIABLE_MARGIN", 0.02))


LOG_DIR = os.path.join(BASE_DIR, "logs")
os.makedirs(LOG_DIR, exist_ok=True)

LOG_LEVEL = os.environ.get("CORNER_SGD_LOG_LEVEL", "INFO")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "filters": {
        'correlation_id': {
            '()': 'cornersgd.utils.log_filters.RunCorrelationId'
        }
    },
    "formatters": {
        "verbose": {
            "format": "{asctime} | [{levelname}] | {correlation_id} | {pathname} | {funcName} | {lineno} | {message}",
            "style": "{",
        },
        "simple": {
            "format": "[{levelname}] {correlation_id} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "level": "WARNING",
            "formatter": "simple",
            "filters": ["correlation_id"],
        },
        "django_error": {
            "class": "logging.handlers.TimedRotatingFileHandler",
            "filename": "{}/{}".format(LOG_DIR, "django_error.log"),
            "when": "D",
            "interval": 1,
            "backupCount": 7,
            "level": "ERROR",
            "formatter": "verbose",
            "filters": ["correlation_id"],
        },
        "app_info": {
            "class": "logging.handlers.TimedRotatingFileHandler",
            "filename": "{}/{}".format(LOG_DIR, "app_info.log"),
            "when": "D",
            "interval": 1,
            "backupCount": 7,
            "level": "INFO",
            "formatter": "verbose",
            "filters": ["correlation_id"],
        },
        "app_error": {
            "class": "logging.handlers.TimedRotatingFileHandler",
            "filename": "{}/{}".format(LOG_DIR, "app_error.log"),
            "when": "D",
            "interval": 1,
            "backupCount": 7,
            "level": "ERROR",
            "formatter": "verbose",
            "filters": ["correlation_id"],
        },
    },
    "loggers": {
        "django": {
            "handlers": ["django_error"],
            "level": "ERROR",
            "propagate": True,
        },
        "app": {
            "handlers": ["app_info", "app_error", "console"],
            "level": LOG_LEVEL,
            "propagate": False,
        },
    },
}

APPLICATION_NAME = os.environ.get("APP_NAME", "corner-sgd")
