"""
Relation-based embedding propagation package
"""
from .engine import (
    ContextAccumulator,
    adapt_entities,
    aggregate_contexts,
    context_means,
    propagate,
    propagate_ep,
)
from .oracle import gradient_step, rep_step, sgd_equivalence_oracle
from .schema import Normalization, PropagationConfig, PropagationMode

__all__ = [
    'ContextAccumulator',
    'Normalization',
    'PropagationConfig',
    'PropagationMode',
    'adapt_entities',
    'aggregate_contexts',
    'context_means',
    'gradient_step',
    'propagate',
    'propagate_ep',
    'rep_step',
    'sgd_equivalence_oracle',
]
