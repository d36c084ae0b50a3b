from django.apps import AppConfig


class ExtremalsConfig(AppConfig):
    name = "extremals"
