"""
Training package: negative sampling, margin loss and SGD
"""
from .sampling import sample_negative, sample_negatives
from .schema import NegativeMode, TrainConfig, TrainReport
from .trainer import (
    OptimizerState,
    TrainingBatch,
    checkpoint_steps,
    margin_loss,
    sgd_step,
    train,
)

__all__ = [
    'NegativeMode',
    'OptimizerState',
    'TrainConfig',
    'TrainReport',
    'TrainingBatch',
    'checkpoint_steps',
    'margin_loss',
    'sample_negative',
    'sample_negatives',
    'sgd_step',
    'train',
]
