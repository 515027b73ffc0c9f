from pathlib import Path
import os
from dotenv import load_dotenv
from .logging_config import logging_config


# Load environment variables from .env file
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Management commands only, no request handling
SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'mobility-analysis-offline')

DEBUG = os.getenv('DJANGO_DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    # Custom Apps
    'usage_patterns',
]

# No models are stored; commands and tests run without a database
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'en-us'

# Trip timestamps are local wall-clock times and stay naive
TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = False

# Analysis configuration
# Every key can be overridden by a config file, by MOBILITY_<KEY> environment
# variables and by command-line flags, in that order.
ANALYSIS_ENV_PREFIX = os.getenv('MOBILITY_ENV_PREFIX', 'MOBILITY_')

ANALYSIS_DEFAULTS = {
    'input': '',
    'schema': 'austin',
    'vehicles': 'bicycle,scooter',
    'modes': 'day_of_week,time_of_day',
    'granularity': 'auto',
    'k': 'auto',
    'seed': '42',
    'out': str(BASE_DIR / 'reports'),
    'quota': 'balanced',
    'max_outer_iters': '100',
    'distance': 'squared_euclidean',
    'k_min': '2',
    'k_max': '6',
    'resamples': '50',
    'fraction': '0.8',
    'flatness_threshold': '0.025',
    'consensus_max_points': '1000',
    'daytime_start': '6',
    'daytime_end': '18',
    'workers': '1',
    'min_distance_m': '160.9344',
    'max_distance_m': '804672.0',
    'min_duration_s': '1',
    'max_duration_s': '86400',
}

# Set up logging
LOGGING = logging_config
