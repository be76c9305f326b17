# Two-phase bitwidth planner and command-line surface
default_app_config = 'apps.planner.apps.PlannerConfig'
