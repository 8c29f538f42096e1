from pathlib import Path
from dotenv import load_dotenv
import os

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'squat-local-only-key')

DEBUG = os.getenv('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []

INSTALLED_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'rest_framework',
    'experiments',
]

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.getenv('SQUAT_DB_PATH', str(BASE_DIR / 'squat.sqlite3')),
    }
}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Dataset root; FashionMNIST IDX files live under <SQUAT_DATA_DIR>/fashion-mnist
SQUAT_DATA_DIR = Path(os.getenv('SQUAT_DATA_DIR', str(BASE_DIR / 'data')))

# Run directories (record.json, model.sqt, CSV reports)
SQUAT_OUTPUT_DIR = Path(os.getenv('SQUAT_OUTPUT_DIR', str(BASE_DIR / 'runs')))

SQUAT_LOG_LEVEL = os.getenv('SQUAT_LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'timestamped': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'timestamped',
        },
    },
    'loggers': {
        'snn': {
            'handlers': ['console'],
            'level': SQUAT_LOG_LEVEL,
            'propagate': False,
        },
        'experiments': {
            'handlers': ['console'],
            'level': SQUAT_LOG_LEVEL,
            'propagate': False,
        },
    },
}

REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
}
