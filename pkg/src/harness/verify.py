"""
Self-checks run by the verify command

Each check builds its own seeded synthetic data, compares the production
code against an independent brute-force computation and returns a
PropertyResult. Nothing here depends on external files.
"""
import time
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np
import structlog
from pydantic import BaseModel

from src.evaluation import RankingProtocol, RankingReport, evaluate, rank_from_scores
from src.graph import build_adjacency, filter_index, generate_synthetic_graph
from src.models import (
    FAMILIES,
    ModelSpec,
    build_operators,
    head_context,
    init_store,
    relation_param_gradients,
    score,
    score_gradients,
    tail_context,
)
from src.propagation import aggregate_contexts, sgd_equivalence_oracle

logger = structlog.get_logger(__name__)

SGD_TOLERANCE = 1e-9
INVERSION_TOLERANCE = 1e-6
AGGREGATION_TOLERANCE = 1e-12
GRADIENT_TOLERANCE = 1e-4
FINITE_DIFFERENCE_STEP = 1e-5


class PropertyResult(BaseModel):
    name: str
    passed: bool
    value: Optional[float] = None
    tolerance: Optional[float] = None
    detail: str = ''
    seconds: float = 0.0


class VerifyReport(BaseModel):
    passed: bool
    properties: List[PropertyResult]


def _spec(family: str, dim: int = 8) -> ModelSpec:
    return ModelSpec(family=family, entity_dim=dim, ote_groups=2 if family == 'ote' else 1)


def _random_store(spec: ModelSpec, num_entities: int, num_relations: int, seed: int):
    store = init_store(spec, num_entities, num_relations, seed=seed, dtype=np.float64)
    if spec.family == 'ote':
        rng = np.random.default_rng(seed + 1)
        store.relation_params['matrices'][...] = rng.normal(size=store.relation_params['matrices'].shape)
        store.relation_params['scales'][...] = rng.uniform(-1, 1, store.relation_params['scales'].shape)
    return store


def check_sgd_equivalence(beta: float = 0.01, seed: int = 0) -> PropertyResult:
    kg = generate_synthetic_graph(50, 5, 200, seed=seed)
    store = init_store(_spec('transe'), kg.num_entities, kg.num_relations, seed=seed,
                       dtype=np.float64)
    discrepancy = sgd_equivalence_oracle(kg, store, beta)
    return PropertyResult(name='sgd-equivalence', passed=discrepancy <= SGD_TOLERANCE,
                          value=discrepancy, tolerance=SGD_TOLERANCE, detail=f"beta={beta}")


def check_inversion(samples: int = 10_000, seed: int = 0) -> PropertyResult:
    """tail_context(head_context(x, r), r) == x for the invertible families"""
    worst = 0.0
    rng = np.random.default_rng(seed)
    for family in ('transe', 'rotate', 'ote'):
        spec = _spec(family)
        store = _random_store(spec, 1, samples, seed)
        ops = build_operators(spec, store.relation_params).take(np.arange(samples))
        x = rng.normal(size=(samples, spec.entity_dim))
        back = tail_context(spec, head_context(spec, x, ops), ops)
        worst = max(worst, float(np.max(np.abs(back - x))))
    return PropertyResult(name='inversion', passed=worst <= INVERSION_TOLERANCE, value=worst,
                          tolerance=INVERSION_TOLERANCE)


def _naive_contexts(spec, store, kg) -> np.ndarray:
    ops = build_operators(spec, store.relation_params)
    sums = np.zeros((kg.num_entities, spec.entity_dim))
    for head, relation, tail in kg.triplets.tolist():
        relation_ops = ops.take(relation)
        sums[tail] += head_context(spec, store.entity[head], relation_ops)
        sums[head] += tail_context(spec, store.entity[tail], relation_ops)
    return sums


def check_aggregation_oracle(seed: int = 0) -> PropertyResult:
    kg = generate_synthetic_graph(40, 4, 300, seed=seed)
    adj = build_adjacency(kg)
    worst = 0.0
    for family in FAMILIES:
        spec = _spec(family)
        store = _random_store(spec, kg.num_entities, kg.num_relations, seed)
        fast = aggregate_contexts(store, adj).sums
        naive = _naive_contexts(spec, store, kg)
        worst = max(worst, float(np.max(np.abs(fast - naive))))
    return PropertyResult(name='aggregation-oracle', passed=worst <= AGGREGATION_TOLERANCE,
                          value=worst, tolerance=AGGREGATION_TOLERANCE)


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale))


def _finite_difference(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """Central differences of a per-row scalar function, one coordinate at a time

    x has shape (N, ...); coordinate j of every row is perturbed together.
    """
    grad = np.zeros_like(x)
    flat = x.reshape(len(x), -1)
    grad_flat = grad.reshape(len(x), -1)
    for j in range(flat.shape[1]):
        original = flat[:, j].copy()
        flat[:, j] = original + FINITE_DIFFERENCE_STEP
        plus = fn(x)
        flat[:, j] = original - FINITE_DIFFERENCE_STEP
        minus = fn(x)
        flat[:, j] = original
        grad_flat[:, j] = (plus - minus) / (2 * FINITE_DIFFERENCE_STEP)
    return grad


def check_gradients(samples: int = 1000, seed: int = 0) -> PropertyResult:
    """Analytic score gradients against central finite differences

    Relation gradients are checked on the raw parameters (for OTE through the
    Gram-Schmidt map), one relation per sample.
    """
    worst = 0.0
    for family in FAMILIES:
        spec = _spec(family)
        store = _random_store(spec, 2 * samples, samples, seed)
        h = store.entity[:samples].copy()
        t = store.entity[samples:].copy()
        relation_ids = np.arange(samples)
        params = {name: array.copy() for name, array in store.relation_params.items()}
        ops = build_operators(spec, params).take(relation_ids)
        analytic = score_gradients(spec, h, ops, t)
        _, raw = relation_param_gradients(spec, build_operators(spec, params), relation_ids,
                                          analytic.relation)

        worst = max(worst, _relative_error(analytic.head, _finite_difference(
            lambda x: score(spec, x, ops, t), h)))
        worst = max(worst, _relative_error(analytic.tail, _finite_difference(
            lambda x: score(spec, h, ops, x), t)))
        for name in params:
            def relation_score(value, name=name):
                perturbed = dict(params, **{name: value})
                return score(spec, h, build_operators(spec, perturbed).take(relation_ids), t)
            worst = max(worst, _relative_error(raw[name],
                                               _finite_difference(relation_score, params[name])))
    return PropertyResult(name='gradient-check', passed=worst <= GRADIENT_TOLERANCE, value=worst,
                          tolerance=GRADIENT_TOLERANCE)


def naive_ranks(spec, store, test_triplets, known, tie_policy='average') -> np.ndarray:
    """Score every entity one by one, then drop known triplets; head ranks then tail ranks"""
    ops = build_operators(spec, store.relation_params)
    head_ranks, tail_ranks = [], []
    for head, relation, tail in test_triplets.tolist():
        relation_ops = ops.take(relation)
        for direction in ('head', 'tail'):
            scores = []
            for entity in range(store.num_entities):
                candidate = (entity, relation, tail) if direction == 'head' else (head, relation, entity)
                scores.append(score(spec, store.entity[candidate[0]], relation_ops,
                                    store.entity[candidate[2]]))
            scores = np.asarray(scores).astype(store.dtype)
            truth = head if direction == 'head' else tail
            others = []
            for entity in range(store.num_entities):
                candidate = (entity, relation, tail) if direction == 'head' else (head, relation, entity)
                if entity != truth and candidate not in known:
                    others.append(scores[entity])
            rank = float(rank_from_scores(scores[truth], np.asarray(others), tie_policy))
            (head_ranks if direction == 'head' else tail_ranks).append(rank)
    return np.asarray(head_ranks + tail_ranks)


def check_ranking_oracle(seed: int = 0) -> PropertyResult:
    kg = generate_synthetic_graph(30, 3, 120, seed=seed)
    test = kg.with_triplets(kg.triplets[:20])
    known = filter_index(kg)
    mismatches = 0
    for family in FAMILIES:
        spec = _spec(family)
        store = _random_store(spec, kg.num_entities, kg.num_relations, seed)
        report = evaluate(store, test, RankingProtocol.filtered(known))
        ranks = naive_ranks(spec, store, test.triplets, known)
        half = len(ranks) // 2
        expected = RankingReport.from_direction_ranks(ranks[:half], ranks[half:])
        if report.to_json_dict() != expected.to_json_dict():
            mismatches += 1
    return PropertyResult(name='ranking-oracle', passed=mismatches == 0, value=float(mismatches),
                          tolerance=0.0, detail="families whose report differs from brute force")


def check_report_invariants(trials: int = 200, seed: int = 0) -> PropertyResult:
    """Hits@K ordering and invariance of ranks under increasing score transforms"""
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(trials):
        scores = rng.integers(-5, 5, size=(16, 12)).astype(np.float64)
        truth = rng.integers(-5, 5, size=16).astype(np.float64)
        for policy in ('average', 'optimistic', 'pessimistic'):
            ranks = rank_from_scores(truth, scores, policy)
            shifted = rank_from_scores(3.0 * truth + 7.0, 3.0 * scores + 7.0, policy)
            if not np.array_equal(ranks, shifted):
                failures += 1
            report = RankingReport.from_direction_ranks(None, ranks)
            if not report.hits1 <= report.hits3 <= report.hits10 or not 0 < report.mrr <= 1:
                failures += 1
    return PropertyResult(name='report-invariants', passed=failures == 0, value=float(failures),
                          tolerance=0.0)


def check_symmetry(samples: int = 1000, seed: int = 0) -> PropertyResult:
    """DistMult scores are symmetric in head and tail"""
    spec = _spec('distmult')
    store = _random_store(spec, 2 * samples, samples, seed)
    ops = build_operators(spec, store.relation_params).take(np.arange(samples))
    h, t = store.entity[:samples], store.entity[samples:]
    worst = float(np.max(np.abs(score(spec, h, ops, t) - score(spec, t, ops, h))))
    return PropertyResult(name='symmetry', passed=worst <= 1e-12, value=worst, tolerance=1e-12)


def check_norm_preservation(samples: int = 1000, seed: int = 0) -> PropertyResult:
    """RotatE rotations and OTE blocks with unit scales keep vector norms"""
    worst = 0.0
    rng = np.random.default_rng(seed)
    for family in ('rotate', 'ote'):
        spec = _spec(family)
        store = _random_store(spec, 1, samples, seed)
        if family == 'ote':
            store.relation_params['scales'][...] = 0.0
        ops = build_operators(spec, store.relation_params).take(np.arange(samples))
        x = rng.normal(size=(samples, spec.entity_dim))
        moved = head_context(spec, x, ops)
        worst = max(worst, float(np.max(np.abs(np.linalg.norm(moved, axis=-1)
                                               - np.linalg.norm(x, axis=-1)))))
    return PropertyResult(name='norm-preservation', passed=worst <= 1e-9, value=worst,
                          tolerance=1e-9)


PROPERTIES: Dict[str, Callable[..., PropertyResult]] = {
    'sgd-equivalence': check_sgd_equivalence,
    'inversion': check_inversion,
    'aggregation-oracle': check_aggregation_oracle,
    'gradient-check': check_gradients,
    'ranking-oracle': check_ranking_oracle,
    'report-invariants': check_report_invariants,
    'symmetry': check_symmetry,
    'norm-preservation': check_norm_preservation,
}


def run_properties(names: Optional[Iterable[str]] = None, beta: float = 0.01,
                   seed: int = 0) -> VerifyReport:
    """Run the named checks (all when names is empty); a check that raises fails"""
    names = list(names) if names else list(PROPERTIES)
    results = []
    for name in names:
        if name not in PROPERTIES:
            results.append(PropertyResult(name=name, passed=False, detail="unknown property"))
            continue
        started = time.perf_counter()
        kwargs = {'beta': beta} if name == 'sgd-equivalence' else {}
        try:
            result = PROPERTIES[name](seed=seed, **kwargs)
        except Exception as e:
            result = PropertyResult(name=name, passed=False, detail=f"{type(e).__name__}: {e}")
        result.seconds = time.perf_counter() - started
        logger.info("Property checked", property=name, passed=result.passed, value=result.value)
        results.append(result)
    return VerifyReport(passed=all(r.passed for r in results), properties=results)
