from django.apps import AppConfig


class CornerTheoryConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'corner_theory'
