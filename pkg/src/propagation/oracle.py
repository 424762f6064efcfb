"""
Executable check that one TransE REP step equals one gradient step

Maximizing valid-triplet scores with the squared distance
J = E_T ||h + r - t||^2 and averaging each entity's gradient over its incident
triplets gives

    h' = (1 - 2 beta) h + 2 beta * mean(t - r)     (entity as head)
    t' = (1 - 2 beta) t + 2 beta * mean(h + r)     (entity as tail)

which is the REP update with alpha = 1 - 2 beta. The gradient side below is
written directly from the loss and shares no code with the propagation path.
"""
import numpy as np

from src.errors import KGRepError
from src.graph import KnowledgeGraph, build_adjacency
from src.models import EmbeddingStore

from .engine import adapt_entities, aggregate_contexts


def rep_step(kg: KnowledgeGraph, store: EmbeddingStore, beta: float) -> np.ndarray:
    """One joint-normalized REP hop with alpha = 1 - 2 beta, in float64"""
    store = store.astype(np.float64)
    accumulator = aggregate_contexts(store, build_adjacency(kg))
    return adapt_entities(store, accumulator, 1.0 - 2.0 * beta).entity


def gradient_step(kg: KnowledgeGraph, store: EmbeddingStore, beta: float) -> np.ndarray:
    """e - beta * (per-entity mean of d||h + r - t||^2 / de) over incident triplets"""
    entity = store.entity.astype(np.float64)
    relation = store.relation_params['vectors'].astype(np.float64)
    heads, relations, tails = kg.heads, kg.relations, kg.tails
    residual = entity[heads] + relation[relations] - entity[tails]
    gradient = np.zeros_like(entity)
    np.add.at(gradient, heads, 2.0 * residual)
    np.add.at(gradient, tails, -2.0 * residual)
    incidence = (np.bincount(heads, minlength=kg.num_entities)
                 + np.bincount(tails, minlength=kg.num_entities))
    updated = entity.copy()
    touched = incidence > 0
    updated[touched] -= beta * gradient[touched] / incidence[touched][:, None]
    return updated


def sgd_equivalence_oracle(kg: KnowledgeGraph, store: EmbeddingStore, beta: float) -> float:
    """max |REP step - gradient step| over all entity embeddings"""
    if store.spec.family != 'transe':
        raise KGRepError("The SGD equivalence holds for TransE only")
    if not 0 <= beta <= 0.5:
        raise KGRepError(f"beta must lie in [0, 0.5] so that alpha = 1 - 2 beta >= 0, got {beta}")
    if store.num_entities == 0:
        return 0.0
    difference = rep_step(kg, store, beta) - gradient_step(kg, store, beta)
    return float(np.max(np.abs(difference)))
