from django.apps import AppConfig


class BuildersConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'builders'
