import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'mobility_analysis.settings')
django.setup()
