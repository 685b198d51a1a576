import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'ssp_lab.settings')
django.setup()
