"""
Entity table and relation parameters of a trained (or propagated) model
"""
import math
from dataclasses import dataclass
from typing import Dict

import numpy as np

from src.errors import CheckpointError, DimensionMismatchError

from .spec import RELATION_PARAM_NAMES, ModelSpec


@dataclass(eq=False)
class EmbeddingStore:
    """E^(k) plus the family's relation parameters

    iteration counts completed propagation hops (0 for pre-trained tables).
    """
    spec: ModelSpec
    entity: np.ndarray
    relation_params: Dict[str, np.ndarray]
    iteration: int = 0

    def __post_init__(self):
        if self.entity.ndim != 2 or self.entity.shape[1] != self.spec.entity_dim:
            raise DimensionMismatchError(
                f"Entity table shape {self.entity.shape} does not match dim {self.spec.entity_dim}")
        names = RELATION_PARAM_NAMES[self.spec.family]
        if tuple(self.relation_params) != names:
            raise DimensionMismatchError(
                f"{self.spec.family} expects relation params {names}, got {tuple(self.relation_params)}")
        expected = self.spec.relation_shapes(self.num_relations)
        for name, array in self.relation_params.items():
            if array.shape != expected[name]:
                raise DimensionMismatchError(
                    f"Relation param {name} has shape {array.shape}, expected {expected[name]}")

    @property
    def num_entities(self) -> int:
        return self.entity.shape[0]

    @property
    def num_relations(self) -> int:
        first = next(iter(self.relation_params.values()))
        return first.shape[0]

    @property
    def dtype(self) -> np.dtype:
        return self.entity.dtype

    def copy(self) -> 'EmbeddingStore':
        return EmbeddingStore(
            spec=self.spec,
            entity=self.entity.copy(),
            relation_params={name: array.copy() for name, array in self.relation_params.items()},
            iteration=self.iteration,
        )

    def with_entity(self, entity: np.ndarray, iteration: int) -> 'EmbeddingStore':
        """Share relation parameters, replace the entity table"""
        return EmbeddingStore(self.spec, entity, self.relation_params, iteration)

    def astype(self, dtype) -> 'EmbeddingStore':
        return EmbeddingStore(
            spec=self.spec,
            entity=self.entity.astype(dtype),
            relation_params={name: array.astype(dtype)
                             for name, array in self.relation_params.items()},
            iteration=self.iteration,
        )

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.entity)):
            raise CheckpointError("Entity table contains non-finite values")
        for name, array in self.relation_params.items():
            if not np.all(np.isfinite(array)):
                raise CheckpointError(f"Relation param {name} contains non-finite values")


def init_store(spec: ModelSpec, num_entities: int, num_relations: int, seed: int = 0,
               dtype=np.float32) -> EmbeddingStore:
    """Random initialization

    Entities and TransE/DistMult relations: uniform(-6/sqrt(n), 6/sqrt(n)).
    RotatE phases: uniform(-pi, pi). OTE: raw blocks uniform(-0.1, 0.1), scales 0.
    """
    rng = np.random.default_rng(seed)
    bound = 6.0 / math.sqrt(spec.entity_dim)
    entity = rng.uniform(-bound, bound, (num_entities, spec.entity_dim))
    shapes = spec.relation_shapes(num_relations)
    if spec.family in ('transe', 'distmult'):
        params = {'vectors': rng.uniform(-bound, bound, shapes['vectors'])}
    elif spec.family == 'rotate':
        params = {'phases': rng.uniform(-math.pi, math.pi, shapes['phases'])}
    else:
        params = {
            'matrices': rng.uniform(-0.1, 0.1, shapes['matrices']),
            'scales': np.zeros(shapes['scales']),
        }
    return EmbeddingStore(
        spec=spec,
        entity=entity.astype(dtype),
        relation_params={name: array.astype(dtype) for name, array in params.items()},
    )
