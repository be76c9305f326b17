# Network description, serialization and dataset ingestion
default_app_config = 'apps.network.apps.NetworkConfig'
