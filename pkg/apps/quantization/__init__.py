# Quantizers, layer statistics and sigma clustering
default_app_config = 'apps.quantization.apps.QuantizationConfig'
