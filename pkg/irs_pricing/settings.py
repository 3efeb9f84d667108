"""
Django settings for irs_pricing project.

The project has no web surface: Django provides the management-command CLI
(`solve`, `sweep`, `print_config`), the settings module and the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# LOAD ENV VARIABLE
load_dotenv(BASE_DIR / ".env")

# Only used by Django internals; nothing here is signed or served.
SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "irs-pricing-local-only")

DEBUG = os.getenv("DJANGO_DEBUG", "0") == "1"

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'stackelberg',
]

# No persistence; tests use SimpleTestCase.
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Experiment harness
# Optional YAML file read by every command when --config is not given.
IRS_GAME_CONFIG = os.getenv("IRS_GAME_CONFIG")

IRS_GAME_RESULTS_DIR = Path(os.getenv("IRS_GAME_RESULTS_DIR", BASE_DIR / "results"))

IRS_GAME_THREADS = int(os.getenv("IRS_GAME_THREADS", 1))

IRS_GAME_LOG_LEVEL = os.getenv("IRS_GAME_LOG_LEVEL", "INFO")


# Logging
# https://docs.djangoproject.com/en/5.2/topics/logging/

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(asctime)s %(levelname)s %(name)s %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "stackelberg": {
            "handlers": ["console"],
            "level": IRS_GAME_LOG_LEVEL,
            "propagate": False,
        },
    },
}
