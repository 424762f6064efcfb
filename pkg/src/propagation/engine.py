"""
Relation-based embedding propagation

Each hop reads the snapshot E^(k) only and writes E^(k+1) into a second
buffer (Jacobi update):

    e_i^(k+1) = alpha * e_i^(k)
              + (1 - alpha) / (|A^H_i| + |A^T_i|) * (sum of contexts of i)

where an entity collects g_t(tail, r) from every triplet it heads and
g_h(head, r) from every triplet it is the tail of. Entities without incident
triplets keep their embedding.
"""
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import structlog

from src.graph import AdjacencyIndex
from src.models import EmbeddingStore, ModelSpec, RelationOperators, build_operators
from src.models import head_context as model_head_context
from src.models import tail_context as model_tail_context

from .schema import Normalization, PropagationConfig, PropagationMode

logger = structlog.get_logger(__name__)

BLOCK_PAIRS = 1 << 16

HopCallback = Callable[[int, EmbeddingStore, float], None]


@dataclass(eq=False)
class ContextAccumulator:
    """Unnormalized context sums of one snapshot, kept per direction

    incoming_* come from triplets where the entity is the tail (g_h of the
    head), outgoing_* from triplets where it is the head (g_t of the tail).
    Sums are float64 whatever the table dtype.
    """
    incoming_sums: np.ndarray
    incoming_degrees: np.ndarray
    outgoing_sums: np.ndarray
    outgoing_degrees: np.ndarray

    @property
    def sums(self) -> np.ndarray:
        return self.incoming_sums + self.outgoing_sums

    @property
    def degrees(self) -> np.ndarray:
        return self.incoming_degrees + self.outgoing_degrees


def _relation_grouped(spec: ModelSpec, context_fn, embeddings: np.ndarray,
                      relations: np.ndarray, ops: RelationOperators) -> np.ndarray:
    """Apply context_fn one relation at a time (OTE blocks are g x g per relation)"""
    out = np.empty(embeddings.shape, dtype=np.result_type(embeddings, np.float64))
    order = np.argsort(relations, kind='stable')
    sorted_relations = relations[order]
    bounds = np.flatnonzero(np.diff(sorted_relations)) + 1
    for segment in np.split(order, bounds):
        if len(segment) == 0:
            continue
        out[segment] = context_fn(spec, embeddings[segment], ops.take(relations[segment[0]]))
    return out


def _contexts(spec: ModelSpec, context_fn, embeddings: np.ndarray, relations: np.ndarray,
              ops: Optional[RelationOperators]) -> np.ndarray:
    if ops is None:
        return embeddings
    if spec.family == 'ote':
        return _relation_grouped(spec, context_fn, embeddings, relations, ops)
    return context_fn(spec, embeddings, ops.take(relations))


def _entity_blocks(offsets: np.ndarray, block_pairs: int) -> List[Tuple[int, int]]:
    """Contiguous entity ranges holding roughly block_pairs adjacency entries"""
    num_entities = len(offsets) - 1
    blocks = []
    start = 0
    while start < num_entities:
        limit = offsets[start] + block_pairs
        end = int(np.searchsorted(offsets, limit, side='right')) - 1
        end = min(max(end, start + 1), num_entities)
        blocks.append((start, end))
        start = end
    return blocks


def _segment_sums(spec: ModelSpec, store: EmbeddingStore, offsets: np.ndarray,
                  pairs: np.ndarray, context_fn, ops: Optional[RelationOperators],
                  threads: int) -> np.ndarray:
    num_entities = len(offsets) - 1
    sums = np.zeros((num_entities, spec.entity_dim), dtype=np.float64)

    def run(block: Tuple[int, int]) -> None:
        first, last = block
        lo, hi = int(offsets[first]), int(offsets[last])
        if lo == hi:
            return
        neighbors, relations = pairs[lo:hi, 0], pairs[lo:hi, 1]
        contexts = _contexts(spec, context_fn, store.entity[neighbors], relations, ops)
        local = offsets[first:last] - lo
        nonempty = np.flatnonzero(np.diff(offsets[first:last + 1]))
        sums[first + nonempty] = np.add.reduceat(
            contexts.astype(np.float64, copy=False), local[nonempty], axis=0)

    blocks = _entity_blocks(offsets, BLOCK_PAIRS)
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as executor:
            list(executor.map(run, blocks))
    else:
        for block in blocks:
            run(block)
    return sums


def aggregate_contexts(store: EmbeddingStore, adj: AdjacencyIndex,
                       ops: Optional[RelationOperators] = None,
                       mode: PropagationMode = 'rep', threads: int = 1) -> ContextAccumulator:
    """Context sums and degrees of every entity from snapshot store.entity

    ops are the frozen relation operators (built from store when omitted); EP
    mode ignores relations and sums raw neighbor embeddings.
    """
    spec = store.spec
    if mode == 'rep' and ops is None:
        ops = build_operators(spec, store.relation_params)
    relation_ops = ops if mode == 'rep' else None
    outgoing = _segment_sums(spec, store, adj.head_offsets, adj.head_pairs,
                             model_tail_context, relation_ops, threads)
    incoming = _segment_sums(spec, store, adj.tail_offsets, adj.tail_pairs,
                             model_head_context, relation_ops, threads)
    return ContextAccumulator(
        incoming_sums=incoming,
        incoming_degrees=adj.tail_degrees,
        outgoing_sums=outgoing,
        outgoing_degrees=adj.head_degrees,
    )


def context_means(accumulator: ContextAccumulator) -> Tuple[np.ndarray, np.ndarray]:
    """Separately normalized (head context mean, tail context mean)

    Rows of entities without contexts in a direction are zero.
    """
    def mean(sums, degrees):
        safe = np.maximum(degrees, 1)[:, None]
        return np.where(degrees[:, None] > 0, sums / safe, 0.0)

    return (mean(accumulator.incoming_sums, accumulator.incoming_degrees),
            mean(accumulator.outgoing_sums, accumulator.outgoing_degrees))


def adapt_entities(store: EmbeddingStore, accumulator: ContextAccumulator, alpha: float,
                   normalization: Normalization = 'joint',
                   out: Optional[np.ndarray] = None) -> EmbeddingStore:
    """Blend each embedding with its aggregated context

    Returns a store at iteration k + 1 sharing the (frozen) relation
    parameters. out, when given, receives the new entity table and must not
    alias store.entity.
    """
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    current = store.entity
    degrees = accumulator.degrees
    if normalization == 'joint':
        safe = np.maximum(degrees, 1)[:, None]
        context = accumulator.sums / safe
        connected = degrees > 0
    else:
        head_mean, tail_mean = context_means(accumulator)
        directions = ((accumulator.incoming_degrees > 0).astype(np.float64)
                      + (accumulator.outgoing_degrees > 0))
        connected = directions > 0
        context = (head_mean + tail_mean) / np.maximum(directions, 1)[:, None]
    blended = alpha * current.astype(np.float64) + (1.0 - alpha) * context
    if out is None:
        out = np.empty_like(current)
    out[...] = np.where(connected[:, None], blended, current).astype(current.dtype)
    return store.with_entity(out, store.iteration + 1)


def propagate(store: EmbeddingStore, adj: AdjacencyIndex, cfg: PropagationConfig,
              on_hop: Optional[HopCallback] = None) -> EmbeddingStore:
    """cfg.hops rounds of aggregate + adapt

    The input table is never written. Hops alternate between two work
    buffers, so a store handed to on_hop is only valid until the callback
    returns.
    """
    if cfg.hops == 0:
        return store
    ops = build_operators(store.spec, store.relation_params) if cfg.mode == 'rep' else None
    buffers = [np.empty_like(store.entity), np.empty_like(store.entity)]
    current = store
    for hop in range(cfg.hops):
        started = time.perf_counter()
        accumulator = aggregate_contexts(current, adj, ops, cfg.mode, cfg.threads)
        current = adapt_entities(current, accumulator, cfg.alpha, cfg.normalization,
                                 out=buffers[hop % 2])
        seconds = time.perf_counter() - started
        logger.debug("Propagation hop finished", hop=hop + 1, mode=cfg.mode, seconds=seconds)
        if on_hop is not None:
            on_hop(hop + 1, current, seconds)
    return current.with_entity(current.entity.copy(), current.iteration)


def propagate_ep(store: EmbeddingStore, adj: AdjacencyIndex, cfg: PropagationConfig,
                 on_hop: Optional[HopCallback] = None) -> EmbeddingStore:
    """Relation-free propagation: identity context functions, same adaptation"""
    return propagate(store, adj, cfg.model_copy(update={'mode': 'ep'}), on_hop)
