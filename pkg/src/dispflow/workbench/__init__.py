"""Configuration, initial data, experiment runners and the command line."""
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiments import run
from .initial import make_initial

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "run",
           "make_initial"]
