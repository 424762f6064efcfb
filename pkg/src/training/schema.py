"""
Training configuration and report schemas
"""
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

NegativeMode = Literal['corrupt-head', 'corrupt-tail', 'both-uniform']


class TrainConfig(BaseModel):
    """Hyperparameters of the margin-ranking SGD trainer"""
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(default=0.01, gt=0, lt=1)
    margin: float = Field(default=6.0, ge=0)
    batch_size: int = Field(default=512, gt=0)
    negatives_per_positive: int = Field(default=1, ge=1)
    epochs: int = Field(default=100, gt=0)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    negative_mode: NegativeMode = 'both-uniform'
    filtered_negatives: bool = False
    negative_retries: int = Field(default=100, gt=0)
    optimizer: Literal['sgd', 'adagrad'] = 'sgd'
    max_entity_norm: Optional[float] = Field(default=None, gt=0)
    checkpoint_fractions: Tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    threads: int = Field(default=1, ge=1)

    @field_validator('checkpoint_fractions')
    @classmethod
    def check_fractions(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        for fraction in value:
            if not 0 < fraction <= 1:
                raise ValueError(f"checkpoint fraction {fraction} outside (0, 1]")
        return tuple(sorted(set(value)))


def _check_loss(loss: float) -> float:
    if not np.isfinite(loss) or loss < 0:
        raise ValueError(f"epoch loss {loss} is negative or not finite")
    return loss


class TrainReport(BaseModel):
    """Per-epoch loss and timing of one training run"""
    epoch_losses: List[float] = Field(default_factory=list)
    epoch_seconds: List[float] = Field(default_factory=list)
    steps: int = 0
    checkpoint_steps: List[int] = Field(default_factory=list)
    degraded_negatives: int = 0

    @field_validator('epoch_losses')
    @classmethod
    def check_losses(cls, value: List[float]) -> List[float]:
        for loss in value:
            _check_loss(loss)
        return value

    def record_epoch(self, loss: float, seconds: float) -> None:
        """Append one epoch; list appends bypass the field validator"""
        self.epoch_losses.append(_check_loss(float(loss)))
        self.epoch_seconds.append(seconds)
