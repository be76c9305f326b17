# SigmaQuant Django apps
