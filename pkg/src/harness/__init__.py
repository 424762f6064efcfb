"""
Command-line harness: configuration, checkpoints, commands and self-checks
"""
from .checkpoint import CheckpointHeader, load_checkpoint, read_header, save_checkpoint
from .commands import cmd_evaluate, cmd_propagate, cmd_sweep, cmd_train, cmd_verify
from .config import ExperimentConfig, load_config
from .verify import PROPERTIES, PropertyResult, VerifyReport, run_properties

__all__ = [
    'CheckpointHeader',
    'ExperimentConfig',
    'PROPERTIES',
    'PropertyResult',
    'VerifyReport',
    'cmd_evaluate',
    'cmd_propagate',
    'cmd_sweep',
    'cmd_train',
    'cmd_verify',
    'load_checkpoint',
    'load_config',
    'read_header',
    'run_properties',
    'save_checkpoint',
]
