from django.apps import AppConfig


class QuantizationConfig(AppConfig):
    name = 'apps.quantization'
    verbose_name = 'Quantization'
