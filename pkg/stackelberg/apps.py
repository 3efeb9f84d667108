from django.apps import AppConfig


class StackelbergConfig(AppConfig):
    name = 'stackelberg'
    verbose_name = 'IRS module pricing game'
