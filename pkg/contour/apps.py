from django.apps import AppConfig


class ContourConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'contour'
