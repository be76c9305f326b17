# Minimal training and inference engine
default_app_config = 'apps.engine.apps.EngineConfig'
