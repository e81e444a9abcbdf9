import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "cornersgd.settings")
django.setup()
