# Shift-add MAC simulation and hardware cost accounting
default_app_config = 'apps.hardware.apps.HardwareConfig'
