"""
Uniform negative sampling by head or tail corruption
"""
from typing import Optional, Tuple

import numpy as np

from src.graph import KnowledgeGraph, KnownTripletSet

from .schema import NegativeMode


def _corrupt_heads(mode: NegativeMode, shape, rng: np.random.Generator) -> np.ndarray:
    if mode == 'corrupt-head':
        return np.ones(shape, dtype=bool)
    if mode == 'corrupt-tail':
        return np.zeros(shape, dtype=bool)
    return rng.random(shape) < 0.5


def sample_negatives(positives: np.ndarray, count: int, num_entities: int,
                     rng: np.random.Generator, mode: NegativeMode = 'both-uniform',
                     known: Optional[KnownTripletSet] = None,
                     max_retries: int = 100) -> Tuple[np.ndarray, np.ndarray]:
    """count corruptions per positive triplet

    Returns (negatives of shape (B, count, 3), degraded mask of shape
    (B, count)). A sample is degraded when the filter could not be satisfied
    within max_retries or the graph has a single entity.
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    shape = (len(positives), count)
    negatives = np.repeat(positives[:, None, :], count, axis=1)
    heads = _corrupt_heads(mode, shape, rng)
    column = np.where(heads, 0, 2)
    replacement = rng.integers(0, num_entities, shape)
    np.put_along_axis(negatives, column[..., None], replacement[..., None], axis=2)
    degraded = np.full(shape, num_entities <= 1)
    if known is None or num_entities <= 1:
        return negatives, degraded

    flat = negatives.reshape(-1, 3)
    flat_column = column.reshape(-1)
    pending = np.flatnonzero(known.contains_batch(flat))
    for _ in range(max_retries):
        if len(pending) == 0:
            break
        flat[pending, flat_column[pending]] = rng.integers(0, num_entities, len(pending))
        pending = pending[known.contains_batch(flat[pending])]
    degraded.reshape(-1)[pending] = True
    return flat.reshape(negatives.shape), degraded


def sample_negative(triplet, kg: KnowledgeGraph, rng: np.random.Generator,
                    mode: NegativeMode = 'both-uniform',
                    known: Optional[KnownTripletSet] = None,
                    max_retries: int = 100) -> Tuple[np.ndarray, bool]:
    """One corrupted copy of triplet and whether it is degraded"""
    negatives, degraded = sample_negatives(np.asarray(triplet)[None, :], 1, kg.num_entities,
                                           rng, mode, known, max_retries)
    return negatives[0, 0], bool(degraded[0, 0])
