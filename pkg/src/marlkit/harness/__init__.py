"""Configs, training/evaluation commands, checkpoints and metric export."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, parse_config
from .evaluation import compare_command, evaluate_command
from .export import export_metrics
from .population import tournament_command
from .training import train_command

__all__ = [
    "RunConfig", "compare_command", "evaluate_command", "export_metrics", "load_config",
    "load_checkpoint", "parse_config", "save_checkpoint", "tournament_command", "train_command",
]
