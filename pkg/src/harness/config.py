"""
Experiment configuration

Config files are flat key=value files read with python-dotenv; command-line
flags override file values and file values override the defaults below.
Everything downstream (ModelSpec, TrainConfig, PropagationConfig) is built
and validated here so that a bad value fails before any compute.
"""
import os
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.errors import ConfigError
from src.evaluation import TiePolicy
from src.graph.store import find_split_file
from src.models import Family, ModelSpec
from src.propagation import Normalization, PropagationConfig, PropagationMode
from src.training import NegativeMode, TrainConfig

Protocol = Literal['filtered', 'unfiltered', 'candidates']
Split = Literal['valid', 'test']

_TUPLE_FIELDS = ('checkpoint_fractions', 'checkpoints', 'sweep_alphas', 'sweep_hops', 'sweep_modes')


class ExperimentConfig(BaseModel):
    """All settings of one command invocation"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    # data and artifacts
    data: Optional[Path] = None
    candidate_file: Optional[Path] = None
    checkpoint: Optional[Path] = None
    checkpoints: Tuple[Path, ...] = ()
    out: Optional[Path] = None

    # model
    model: Optional[Family] = None
    dim: int = Field(default=200, gt=0)
    gamma: float = Field(default=6.0, ge=0)
    norm_order: Literal[1, 2] = 2
    ote_groups: int = Field(default=1, ge=1)

    # training
    lr: float = 0.01
    batch_size: int = 512
    negatives: int = 1
    epochs: int = 100
    negative_mode: NegativeMode = 'both-uniform'
    filtered_negatives: bool = False
    optimizer: Literal['sgd', 'adagrad'] = 'sgd'
    max_entity_norm: Optional[float] = None
    checkpoint_fractions: Tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    float_width: Literal[4, 8] = 4

    # propagation
    alpha: float = 0.98
    hops: int = 10
    mode: PropagationMode = 'rep'
    normalization: Normalization = 'joint'
    evaluate_each_hop: bool = False

    # evaluation
    protocol: Protocol = 'filtered'
    tie: TiePolicy = 'average'
    split: Split = 'test'

    # sweep grid
    sweep_alphas: Tuple[float, ...] = (0.95, 0.96, 0.97, 0.98, 0.99)
    sweep_hops: Tuple[int, ...] = tuple(range(1, 16))
    sweep_modes: Tuple[PropagationMode, ...] = ('rep',)

    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    threads: int = Field(default=1, ge=1)
    provenance: bool = True

    @field_validator(*_TUPLE_FIELDS, mode='before')
    @classmethod
    def split_list(cls, value: Any) -> Any:
        if isinstance(value, str):
            return tuple(item.strip() for item in value.split(',') if item.strip())
        return value

    @field_validator('norm_order', 'float_width', mode='before')
    @classmethod
    def literal_int(cls, value: Any) -> Any:
        # config files deliver strings; Literal ints do not coerce them
        if isinstance(value, str) and value.strip().isdigit():
            return int(value)
        return value

    @model_validator(mode='after')
    def check_downstream(self) -> 'ExperimentConfig':
        # Surface downstream invariant violations now
        self.train_config()
        self.propagation_config()
        if self.model is not None:
            self.model_spec()
        for alpha in self.sweep_alphas:
            PropagationConfig(alpha=alpha)
        for hops in self.sweep_hops:
            PropagationConfig(hops=hops)
        return self

    def model_spec(self, family: Optional[str] = None) -> ModelSpec:
        family = family or self.model
        if family is None:
            raise ConfigError("No model family given (--model)")
        return ModelSpec(family=family, entity_dim=self.dim, margin=self.gamma,
                         norm_order=self.norm_order, ote_groups=self.ote_groups)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.lr,
            margin=self.gamma,
            batch_size=self.batch_size,
            negatives_per_positive=self.negatives,
            epochs=self.epochs,
            seed=self.seed,
            negative_mode=self.negative_mode,
            filtered_negatives=self.filtered_negatives,
            optimizer=self.optimizer,
            max_entity_norm=self.max_entity_norm,
            checkpoint_fractions=self.checkpoint_fractions,
            threads=self.threads,
        )

    def propagation_config(self, **updates) -> PropagationConfig:
        values = dict(alpha=self.alpha, hops=self.hops, mode=self.mode,
                      normalization=self.normalization,
                      evaluate_each_hop=self.evaluate_each_hop, threads=self.threads)
        values.update(updates)
        return PropagationConfig(**values)

    def all_checkpoints(self) -> Tuple[Path, ...]:
        if self.checkpoints:
            return self.checkpoints
        return (self.checkpoint,) if self.checkpoint is not None else ()

    def require_paths(self, *, data: bool = False, checkpoint: bool = False) -> None:
        """ConfigError naming the first referenced file that does not exist"""
        if data:
            if self.data is None:
                raise ConfigError("No dataset directory given (--data)")
            train_file = find_split_file(self.data, 'train')
            if not train_file.exists():
                raise ConfigError(f"Training file not found: {train_file}")
        if self.candidate_file is not None and not self.candidate_file.exists():
            raise ConfigError(f"Candidate file not found: {self.candidate_file}")
        if self.protocol == 'candidates' and self.candidate_file is None:
            raise ConfigError("The candidates protocol needs --candidate-file")
        if checkpoint:
            paths = self.all_checkpoints()
            if not paths:
                raise ConfigError("No checkpoint given (--checkpoint)")
            for path in paths:
                if not Path(path).exists():
                    raise ConfigError(f"Checkpoint not found: {path}")


def _normalize_key(key: str) -> str:
    return key.strip().lower().replace('-', '_')


def load_config(path: Optional[os.PathLike] = None,
                overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Merge defaults < config file < overrides (None values are ignored)"""
    values: Dict[str, Any] = {}
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"Config file not found: {path}")
        for key, value in dotenv_values(path).items():
            if value is not None and value != '':
                values[_normalize_key(key)] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            values[_normalize_key(key)] = value
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from None
