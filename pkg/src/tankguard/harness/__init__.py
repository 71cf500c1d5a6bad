"""CLI, experiment plans, episode logs and result comparison."""
from .compare import CompareError, compare
from .config_file import ConfigError, FileConfig, load_config, parse_config
from .episode_log import ReplayMismatch, replay_episode, write_episode_log
from .plan import ExperimentPlan

__all__ = ["CompareError", "compare", "ConfigError", "FileConfig", "load_config", "parse_config",
           "ReplayMismatch", "replay_episode", "write_episode_log", "ExperimentPlan"]
