"""
Triplet-based KG embedding models
"""
from .orthogonal import gram_schmidt, gram_schmidt_backward, gram_schmidt_qr
from .spec import FAMILIES, RELATION_PARAM_NAMES, Family, ModelSpec
from .store import EmbeddingStore, init_store
from .zoo import (
    RelationOperators,
    ScoreGradients,
    build_operators,
    head_context,
    match,
    operators_for,
    relation_param_gradients,
    score,
    score_against,
    score_gradients,
    tail_context,
)

__all__ = [
    'FAMILIES',
    'RELATION_PARAM_NAMES',
    'EmbeddingStore',
    'Family',
    'ModelSpec',
    'RelationOperators',
    'ScoreGradients',
    'build_operators',
    'gram_schmidt',
    'gram_schmidt_backward',
    'gram_schmidt_qr',
    'head_context',
    'init_store',
    'match',
    'operators_for',
    'relation_param_gradients',
    'score',
    'score_against',
    'score_gradients',
    'tail_context',
]
