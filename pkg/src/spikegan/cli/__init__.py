"""Command-line experiment runner."""

from .config import ExperimentConfig, load_config, parse_conv_spec, to_ini
from .main import main, run_config

__all__ = ["ExperimentConfig", "load_config", "main", "parse_conv_spec", "run_config", "to_ini"]
