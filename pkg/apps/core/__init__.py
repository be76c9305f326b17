# Logging, errors, tracing and run configuration shared by all apps
default_app_config = 'apps.core.apps.CoreConfig'
