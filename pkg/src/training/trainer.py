"""
Margin-ranking training with sparse SGD updates
"""
import contextlib
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import structlog

from src.errors import KGRepError, NonFiniteGradientError
from src.graph import KnowledgeGraph, KnownTripletSet
from src.models import (
    EmbeddingStore,
    ModelSpec,
    init_store,
    operators_for,
    relation_param_gradients,
    score,
    score_gradients,
)

from .sampling import sample_negatives
from .schema import TrainConfig, TrainReport

logger = structlog.get_logger(__name__)

ADAGRAD_EPSILON = 1e-10

CheckpointCallback = Callable[[int, EmbeddingStore], None]


def margin_loss(pos_score, neg_score, margin: float):
    """[margin - f(pos) + f(neg)]_+ ; zero iff pos_score >= neg_score + margin"""
    return np.maximum(0.0, margin - np.asarray(pos_score) + np.asarray(neg_score))


@dataclass(eq=False)
class TrainingBatch:
    positives: np.ndarray   # (B, 3)
    negatives: np.ndarray   # (B, K, 3)

    def pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        """(positive, negative) rows aligned pairwise, both (B*K, 3)"""
        count = self.negatives.shape[1]
        return np.repeat(self.positives, count, axis=0), self.negatives.reshape(-1, 3)


class OptimizerState:
    """Row-sparse Adagrad accumulators, allocated lazily per parameter"""

    def __init__(self):
        self.accumulators: Dict[str, np.ndarray] = {}

    def scaled(self, name: str, shape, rows: np.ndarray, grad: np.ndarray) -> np.ndarray:
        accumulator = self.accumulators.get(name)
        if accumulator is None:
            accumulator = self.accumulators[name] = np.zeros(shape, dtype=np.float64)
        accumulator[rows] += grad * grad
        return grad / (np.sqrt(accumulator[rows]) + ADAGRAD_EPSILON)


def _updated(table: np.ndarray, rows: np.ndarray, grad: np.ndarray, config: TrainConfig,
             state: Optional[OptimizerState], name: str) -> np.ndarray:
    """New values of table[rows], cast to the table's dtype but not yet written"""
    if config.optimizer == 'adagrad':
        grad = state.scaled(name, table.shape, rows, grad)
    updated = table[rows].astype(np.float64) - config.learning_rate * grad
    with np.errstate(over='ignore'):
        return updated.astype(table.dtype)


def _clip_rows(table: np.ndarray, rows: np.ndarray, max_norm: float) -> None:
    norms = np.linalg.norm(table[rows].astype(np.float64), axis=1)
    over = norms > max_norm
    if np.any(over):
        clipped = rows[over]
        table[clipped] = (table[clipped] * (max_norm / norms[over])[:, None]).astype(table.dtype)


def sgd_step(store: EmbeddingStore, batch: TrainingBatch, config: TrainConfig,
             state: Optional[OptimizerState] = None,
             lock: Optional[threading.Lock] = None, step: int = 0) -> float:
    """One update of e' = e - beta * dL/de on the rows the batch touches

    Updates store in place and returns the mean hinge loss of the batch. When
    every margin is already satisfied nothing is written.
    A non-finite loss, gradient or updated row raises NonFiniteGradientError
    before anything is written.
    """
    spec = store.spec
    guard = lock if lock is not None else contextlib.nullcontext()
    positives, negatives = batch.pairs()
    pair_count = len(positives)
    unique_relations, local_relations = np.unique(positives[:, 1], return_inverse=True)

    with guard:
        params = {name: array[unique_relations].copy()
                  for name, array in store.relation_params.items()}
        pos_h, pos_t = store.entity[positives[:, 0]], store.entity[positives[:, 2]]
        neg_h, neg_t = store.entity[negatives[:, 0]], store.entity[negatives[:, 2]]

    ops = operators_for(spec, params, seed=step)
    row_ops = ops.take(local_relations)
    losses = margin_loss(score(spec, pos_h, row_ops, pos_t),
                         score(spec, neg_h, row_ops, neg_t), config.margin)
    mean_loss = float(np.mean(losses)) if pair_count else 0.0
    bad_pairs = np.flatnonzero(~np.isfinite(losses))
    if len(bad_pairs):
        raise NonFiniteGradientError("Non-finite loss", {
            'step': step,
            'loss': mean_loss,
            'pairs': bad_pairs[:10].tolist(),
            'entities': np.unique(np.concatenate([positives[bad_pairs][:, [0, 2]],
                                                  negatives[bad_pairs][:, [0, 2]]]))[:10].tolist(),
            'relations': np.unique(positives[bad_pairs, 1])[:10].tolist(),
        })
    active = np.flatnonzero(losses > 0)
    if len(active) == 0:
        return mean_loss

    active_ops = row_ops.take(active)
    pos_grad = score_gradients(spec, pos_h[active], active_ops, pos_t[active])
    neg_grad = score_gradients(spec, neg_h[active], active_ops, neg_t[active])
    entity_rows = np.concatenate([positives[active, 0], positives[active, 2],
                                  negatives[active, 0], negatives[active, 2]])
    entity_grads = np.concatenate([-pos_grad.head, -pos_grad.tail,
                                   neg_grad.head, neg_grad.tail]) / pair_count
    relation_grads = {name: (neg_grad.relation[name] - pos_grad.relation[name]) / pair_count
                      for name in pos_grad.relation}
    local_ids, relation_grads = relation_param_gradients(
        spec, ops, local_relations[active], relation_grads)
    relation_rows = unique_relations[local_ids]

    touched, inverse = np.unique(entity_rows, return_inverse=True)
    summed = np.zeros((len(touched), spec.entity_dim), dtype=np.float64)
    np.add.at(summed, inverse, entity_grads)

    finite = np.all(np.isfinite(summed)) and all(
        np.all(np.isfinite(grad)) for grad in relation_grads.values())
    if not finite:
        raise NonFiniteGradientError("Non-finite gradient", {
            'step': step,
            'loss': mean_loss,
            'active_pairs': int(len(active)),
            'entities': touched[~np.all(np.isfinite(summed), axis=1)][:10].tolist(),
            'relations': relation_rows.tolist()[:10],
        })

    with guard:
        updates = [('entity', store.entity, touched,
                    _updated(store.entity, touched, summed, config, state, 'entity'))]
        for name, grad in relation_grads.items():
            table = store.relation_params[name]
            updates.append((name, table, relation_rows,
                            _updated(table, relation_rows, grad, config, state, name)))
        overflowed = [name for name, _, _, values in updates if not np.all(np.isfinite(values))]
        if overflowed:
            raise NonFiniteGradientError("Non-finite parameter update", {
                'step': step,
                'loss': mean_loss,
                'active_pairs': int(len(active)),
                'parameters': overflowed,
            })
        for _, table, rows, values in updates:
            table[rows] = values
        if config.max_entity_norm is not None:
            _clip_rows(store.entity, touched, config.max_entity_norm)
    return mean_loss


def checkpoint_steps(total_steps: int, fractions) -> Tuple[int, ...]:
    """Steps at which checkpoints fall, e.g. 0.25N, 0.5N, 0.75N, N"""
    return tuple(sorted({min(total_steps, max(1, round(f * total_steps))) for f in fractions}))


def train(kg: KnowledgeGraph, spec: ModelSpec, config: TrainConfig,
          known: Optional[KnownTripletSet] = None,
          store: Optional[EmbeddingStore] = None,
          on_checkpoint: Optional[CheckpointCallback] = None,
          training_log=None, dtype=np.float32) -> Tuple[EmbeddingStore, TrainReport]:
    """Minimize the margin ranking criterion over kg's triplets

    With threads == 1 the run is bit-reproducible for a fixed seed. With more
    threads, batches of one window are computed concurrently and applied as
    locked row updates in completion order, which is not reproducible.
    """
    if len(kg) == 0:
        raise KGRepError("Cannot train on an empty graph")
    if config.filtered_negatives and known is None:
        raise KGRepError("Filtered negatives need a known-triplet set")
    if store is None:
        store = init_store(spec, kg.num_entities, kg.num_relations, config.seed, dtype)
    rng = np.random.default_rng(config.seed)
    state = OptimizerState() if config.optimizer == 'adagrad' else None
    steps_per_epoch = math.ceil(len(kg) / config.batch_size)
    total_steps = steps_per_epoch * config.epochs
    pending_checkpoints = list(checkpoint_steps(total_steps, config.checkpoint_fractions))
    report = TrainReport()
    lock = threading.Lock() if config.threads > 1 else None
    executor = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    logger.info("Training started", family=spec.family, dim=spec.entity_dim,
                triplets=len(kg), total_steps=total_steps, threads=config.threads)

    step = 0
    try:
        for epoch in range(config.epochs):
            started = time.perf_counter()
            order = rng.permutation(len(kg))
            batches = []
            for start in range(0, len(order), config.batch_size):
                positives = kg.triplets[order[start:start + config.batch_size]]
                negatives, degraded = sample_negatives(
                    positives, config.negatives_per_positive, kg.num_entities, rng,
                    config.negative_mode, known if config.filtered_negatives else None,
                    config.negative_retries)
                report.degraded_negatives += int(np.count_nonzero(degraded))
                batches.append(TrainingBatch(positives, negatives))

            losses = []
            window = config.threads
            for start in range(0, len(batches), window):
                chunk = batches[start:start + window]
                if executor is None:
                    losses.append(sgd_step(store, chunk[0], config, state, step=step + 1))
                else:
                    futures = [executor.submit(sgd_step, store, batch, config, state, lock,
                                               step + offset + 1)
                               for offset, batch in enumerate(chunk)]
                    losses.extend(future.result() for future in futures)
                step += len(chunk)
                reached = [target for target in pending_checkpoints if target <= step]
                if reached:
                    del pending_checkpoints[:len(reached)]
                    report.checkpoint_steps.append(step)
                    logger.info("Checkpoint reached", step=step, targets=reached)
                    if on_checkpoint is not None:
                        on_checkpoint(step, store)

            seconds = time.perf_counter() - started
            epoch_loss = float(np.mean(losses))
            report.record_epoch(epoch_loss, seconds)
            logger.info("Epoch finished", epoch=epoch + 1, loss=epoch_loss, seconds=seconds)
            if training_log is not None:
                training_log.info('epoch', epoch=epoch + 1, step=step, loss=epoch_loss,
                                  seconds=seconds)
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    report.steps = step
    return store, report
