from django.apps import AppConfig


class UsagePatternsConfig(AppConfig):
    name = 'usage_patterns'
    verbose_name = 'Micromobility usage patterns'
