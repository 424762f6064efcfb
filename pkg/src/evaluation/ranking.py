"""
Link prediction ranking under the filtered or candidate-list protocol
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import structlog

from src.errors import CandidateDataError, RankingQueryError
from src.graph import KnowledgeGraph, KnownTripletSet, empty_filter
from src.models import EmbeddingStore, RelationOperators, build_operators, head_context, score_against

from .report import RankingReport

logger = structlog.get_logger(__name__)

TiePolicy = Literal['average', 'optimistic', 'pessimistic']
Direction = Literal['head', 'tail']

QUERY_CHUNK = 256


@dataclass(frozen=True, eq=False)
class RankingProtocol:
    """filtered: rank against all entities minus known triplets.
    candidates: rank tails against a supplied candidate list per test triplet.
    """
    kind: Literal['filtered', 'candidates']
    known: Optional[KnownTripletSet] = None
    candidates: Optional[np.ndarray] = None

    @classmethod
    def filtered(cls, known: KnownTripletSet) -> 'RankingProtocol':
        return cls('filtered', known=known)

    @classmethod
    def unfiltered(cls, num_entities: int, num_relations: int) -> 'RankingProtocol':
        return cls('filtered', known=empty_filter(num_entities, num_relations))

    @classmethod
    def candidate_lists(cls, candidates: np.ndarray) -> 'RankingProtocol':
        return cls('candidates', candidates=np.asarray(candidates, dtype=np.int64))


def rank_from_scores(truth_score, other_scores: np.ndarray, tie_policy: TiePolicy = 'average'):
    """1 + #(strictly higher) plus the tie share given by the policy

    Works row-wise when truth_score is (B,) and other_scores (B, C); entries
    set to NaN are ignored.
    """
    truth_score = np.asarray(truth_score)
    other_scores = np.asarray(other_scores)
    column = truth_score[..., None]
    greater = np.sum(other_scores > column, axis=-1)
    equal = np.sum(other_scores == column, axis=-1)
    if tie_policy == 'optimistic':
        return 1.0 + greater
    if tie_policy == 'pessimistic':
        return 1.0 + greater + equal
    if tie_policy == 'average':
        return 1.0 + greater + equal / 2.0
    raise ValueError(f"Unknown tie policy {tie_policy!r}")


def _candidate_scores(store: EmbeddingStore, ops: RelationOperators, anchor: np.ndarray,
                      relation: int, direction: Direction,
                      candidates: Optional[np.ndarray] = None) -> np.ndarray:
    """Scores (B, C) of each query against all entities (or per-query candidates)"""
    spec = store.spec
    relation_ops = ops.take(relation)
    if candidates is not None:
        transformed = head_context(spec, store.entity[anchor], relation_ops)
        out = np.empty(candidates.shape, dtype=np.float64)
        for i in range(len(anchor)):
            out[i] = score_against(spec, transformed[i:i + 1], store.entity[candidates[i]])[0]
        return out
    if direction == 'tail':
        transformed = head_context(spec, store.entity[anchor], relation_ops)
        return score_against(spec, transformed, store.entity)
    transformed_all = head_context(spec, store.entity, relation_ops)
    return score_against(spec, transformed_all, store.entity[anchor]).T


def rank_query(store: EmbeddingStore, query: Tuple[int, int, int], direction: Direction,
               candidates: Sequence[int], tie_policy: TiePolicy = 'average',
               ops: Optional[RelationOperators] = None) -> float:
    """Rank of the truth among {truth} U candidates for (h, r, ?) or (?, r, t)

    query is the full test triplet; direction says which end is the truth.
    """
    head, relation, tail = (int(x) for x in query)
    truth, anchor = (tail, head) if direction == 'tail' else (head, tail)
    if not 0 <= truth < store.num_entities or not 0 <= anchor < store.num_entities:
        raise RankingQueryError(f"Query {query} refers to an entity outside the table")
    candidates = np.asarray(candidates, dtype=np.int64)
    if len(candidates) == 0:
        raise RankingQueryError("Candidate list is empty")
    others = candidates[candidates != truth]
    if ops is None:
        ops = build_operators(store.spec, store.relation_params)
    scored = np.concatenate([[truth], others])
    if direction == 'tail':
        scores = _candidate_scores(store, ops, np.array([anchor]), relation, 'tail',
                                   scored[None, :])[0]
    else:
        spec = store.spec
        transformed = head_context(spec, store.entity[scored], ops.take(relation))
        scores = score_against(spec, transformed, store.entity[[anchor]])[:, 0]
    scores = scores.astype(store.dtype)
    return float(rank_from_scores(scores[0], scores[1:], tie_policy))


def _filtered_ranks(store: EmbeddingStore, ops: RelationOperators, triplets: np.ndarray,
                    rows: np.ndarray, direction: Direction, known: KnownTripletSet,
                    tie_policy: TiePolicy) -> np.ndarray:
    relation = int(triplets[rows[0], 1])
    heads, tails = triplets[rows, 0], triplets[rows, 2]
    anchor, truth = (heads, tails) if direction == 'tail' else (tails, heads)
    scores = _candidate_scores(store, ops, anchor, relation, direction).astype(store.dtype)
    local = np.arange(len(rows))
    truth_scores = scores[local, truth].copy()
    excluded = np.zeros(scores.shape, dtype=bool)
    excluded[local, truth] = True
    for i in range(len(rows)):
        if direction == 'tail':
            filtered = known.known_tails(heads[i], relation)
        else:
            filtered = known.known_heads(relation, tails[i])
        excluded[i, filtered] = True
    scores = np.where(excluded, np.nan, scores)
    return rank_from_scores(truth_scores, scores, tie_policy)


def _candidate_ranks(store: EmbeddingStore, ops: RelationOperators, triplets: np.ndarray,
                     rows: np.ndarray, candidates: np.ndarray,
                     tie_policy: TiePolicy) -> np.ndarray:
    relation = int(triplets[rows[0], 1])
    truth = triplets[rows, 2]
    scored = np.concatenate([truth[:, None], candidates[rows]], axis=1)
    scores = _candidate_scores(store, ops, triplets[rows, 0], relation, 'tail',
                               scored).astype(store.dtype)
    others = np.where(scored[:, 1:] == truth[:, None], np.nan, scores[:, 1:])
    return rank_from_scores(scores[:, 0], others, tie_policy)


def _work_items(triplets: np.ndarray) -> List[np.ndarray]:
    """Query row indices grouped by relation, chunked"""
    items = []
    order = np.argsort(triplets[:, 1], kind='stable')
    bounds = np.flatnonzero(np.diff(triplets[order, 1])) + 1
    for group in np.split(order, bounds):
        for start in range(0, len(group), QUERY_CHUNK):
            chunk = group[start:start + QUERY_CHUNK]
            if len(chunk):
                items.append(chunk)
    return items


def evaluate(store: EmbeddingStore, test: KnowledgeGraph, protocol: RankingProtocol,
             tie_policy: TiePolicy = 'average', threads: int = 1) -> RankingReport:
    """MRR and Hits@K of test triplets

    filtered: head and tail queries for every triplet. candidates: tail
    queries only, against candidates[i] for test triplet i.
    """
    triplets = test.triplets
    ops = build_operators(store.spec, store.relation_params)
    if protocol.kind == 'candidates':
        candidates = protocol.candidates
        if candidates is None or len(candidates) < len(triplets):
            raise CandidateDataError("Missing candidate line",
                                     triplet_index=0 if candidates is None else len(candidates))
        if len(candidates) and (candidates.min() < 0 or candidates.max() >= store.num_entities):
            raise CandidateDataError("Candidate entity id outside the table")
    items = _work_items(triplets) if len(triplets) else []
    tail_ranks = np.zeros(len(triplets))
    head_ranks = np.zeros(len(triplets))

    def run(rows: np.ndarray) -> None:
        if protocol.kind == 'candidates':
            tail_ranks[rows] = _candidate_ranks(store, ops, triplets, rows, candidates, tie_policy)
            return
        tail_ranks[rows] = _filtered_ranks(store, ops, triplets, rows, 'tail',
                                           protocol.known, tie_policy)
        head_ranks[rows] = _filtered_ranks(store, ops, triplets, rows, 'head',
                                           protocol.known, tie_policy)

    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as executor:
            list(executor.map(run, items))
    else:
        for rows in items:
            run(rows)

    report = RankingReport.from_direction_ranks(
        None if protocol.kind == 'candidates' else head_ranks, tail_ranks)
    logger.info("Evaluation finished", protocol=protocol.kind, queries=report.num_queries,
                mrr=round(report.mrr, 4), hits10=round(report.hits10, 4))
    return report
