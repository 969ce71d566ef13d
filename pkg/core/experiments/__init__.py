"""
Experiments - Configurazione, esecuzione e reporting degli esperimenti
"""

from .config_loader import (
    ConfigValidationError, ExperimentConfig, ExperimentConfigLoader, load_experiment_config,
)
from .runner import EXPERIMENT_RUNNERS, RunResult, run

__all__ = [
    'ConfigValidationError', 'ExperimentConfig', 'ExperimentConfigLoader',
    'load_experiment_config', 'EXPERIMENT_RUNNERS', 'RunResult', 'run',
]
