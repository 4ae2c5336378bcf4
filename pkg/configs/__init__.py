# Configs Package
from .defaults import RunDefaults
from .config_manager import ConfigManager, RunConfig, load_run_config
