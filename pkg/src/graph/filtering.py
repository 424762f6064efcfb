"""
Known-triplet membership used by filtered ranking and filtered negative sampling
"""
from typing import Dict, Tuple

import numpy as np

from .store import KnowledgeGraph

_EMPTY = np.zeros(0, dtype=np.int64)
_EMPTY.setflags(write=False)


class KnownTripletSet:
    """Set of (h, r, t) over the union of all splits

    Triplets are packed into one int64 key so scalar lookups are hash-set hits
    and batch lookups are sorted-array searches.
    """

    def __init__(self, triplets: np.ndarray, num_entities: int, num_relations: int):
        triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
        self.num_entities = num_entities
        self.num_relations = num_relations
        keys = self._pack(triplets[:, 0], triplets[:, 1], triplets[:, 2])
        self._sorted_keys = np.unique(keys)
        self._keys = frozenset(self._sorted_keys.tolist())
        self._tails = self._group(triplets[:, 0], triplets[:, 1], triplets[:, 2])
        self._heads = self._group(triplets[:, 2], triplets[:, 1], triplets[:, 0])

    def _pack(self, heads, relations, tails):
        return (np.asarray(heads, dtype=np.int64) * self.num_relations
                + np.asarray(relations, dtype=np.int64)) * self.num_entities \
            + np.asarray(tails, dtype=np.int64)

    @staticmethod
    def _group(anchor: np.ndarray, relation: np.ndarray,
               other: np.ndarray) -> Dict[Tuple[int, int], np.ndarray]:
        if len(anchor) == 0:
            return {}
        order = np.lexsort((other, relation, anchor))
        anchor, relation, other = anchor[order], relation[order], other[order]
        change = np.flatnonzero((np.diff(anchor) != 0) | (np.diff(relation) != 0)) + 1
        starts = np.concatenate([[0], change])
        ends = np.concatenate([change, [len(anchor)]])
        groups = {}
        for start, end in zip(starts.tolist(), ends.tolist()):
            members = np.unique(other[start:end])
            members.setflags(write=False)
            groups[(int(anchor[start]), int(relation[start]))] = members
        return groups

    def __len__(self) -> int:
        return len(self._sorted_keys)

    def __contains__(self, triplet) -> bool:
        head, relation, tail = (int(x) for x in triplet)
        return ((head * self.num_relations + relation) * self.num_entities + tail) in self._keys

    def contains_batch(self, triplets: np.ndarray) -> np.ndarray:
        triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
        keys = self._pack(triplets[:, 0], triplets[:, 1], triplets[:, 2])
        if len(self._sorted_keys) == 0:
            return np.zeros(len(keys), dtype=bool)
        positions = np.searchsorted(self._sorted_keys, keys)
        positions = np.minimum(positions, len(self._sorted_keys) - 1)
        return self._sorted_keys[positions] == keys

    def known_tails(self, head: int, relation: int) -> np.ndarray:
        """Sorted distinct t with (head, relation, t) known"""
        return self._tails.get((int(head), int(relation)), _EMPTY)

    def known_heads(self, relation: int, tail: int) -> np.ndarray:
        """Sorted distinct h with (h, relation, tail) known"""
        return self._heads.get((int(tail), int(relation)), _EMPTY)


def filter_index(kg_union: KnowledgeGraph) -> KnownTripletSet:
    """Membership structure over the union of train/valid/test"""
    return KnownTripletSet(kg_union.triplets, kg_union.num_entities, kg_union.num_relations)


def empty_filter(num_entities: int, num_relations: int) -> KnownTripletSet:
    return KnownTripletSet(np.zeros((0, 3), dtype=np.int64), num_entities, num_relations)
