"""
Compressed (offset + flat array) head/tail adjacency lists
"""
from dataclasses import dataclass

import numpy as np

from .store import KnowledgeGraph


@dataclass(frozen=True, eq=False)
class AdjacencyIndex:
    """Per-entity adjacency in CSR layout

    head_pairs[head_offsets[i]:head_offsets[i + 1]] is A^H_i, the
    (tail, relation) pairs of triplets whose head is entity i.
    tail_pairs[tail_offsets[i]:tail_offsets[i + 1]] is A^T_i, the
    (head, relation) pairs of triplets whose tail is entity i.
    *_triplets hold the row of T each entry came from.
    """
    num_entities: int
    head_offsets: np.ndarray
    head_pairs: np.ndarray
    head_triplets: np.ndarray
    tail_offsets: np.ndarray
    tail_pairs: np.ndarray
    tail_triplets: np.ndarray

    def head_list(self, entity: int) -> np.ndarray:
        return self.head_pairs[self.head_offsets[entity]:self.head_offsets[entity + 1]]

    def tail_list(self, entity: int) -> np.ndarray:
        return self.tail_pairs[self.tail_offsets[entity]:self.tail_offsets[entity + 1]]

    @property
    def head_degrees(self) -> np.ndarray:
        return np.diff(self.head_offsets)

    @property
    def tail_degrees(self) -> np.ndarray:
        return np.diff(self.tail_offsets)

    @property
    def degrees(self) -> np.ndarray:
        """|A^H_i| + |A^T_i|"""
        return self.head_degrees + self.tail_degrees

    @property
    def num_triplets(self) -> int:
        return len(self.head_pairs)

    def head_owners(self) -> np.ndarray:
        """Entity id owning each head_pairs row"""
        return np.repeat(np.arange(self.num_entities), self.head_degrees)

    def tail_owners(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_entities), self.tail_degrees)

    def to_triplets(self) -> np.ndarray:
        """Rebuild T (in head-grouped order) from the head lists"""
        owners = self.head_owners()
        return np.stack([owners, self.head_pairs[:, 1], self.head_pairs[:, 0]], axis=1)


def _index_direction(owner: np.ndarray, neighbor: np.ndarray, relation: np.ndarray,
                     num_entities: int):
    order = np.argsort(owner, kind='stable').astype(np.int64)
    counts = np.bincount(owner, minlength=num_entities)
    offsets = np.zeros(num_entities + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    pairs = np.stack([neighbor[order], relation[order]], axis=1).astype(np.int64)
    for array in (offsets, pairs, order):
        array.setflags(write=False)
    return offsets, pairs, order


def build_adjacency(kg: KnowledgeGraph) -> AdjacencyIndex:
    """Index both directions; isolated entities get empty lists"""
    heads, relations, tails = kg.heads, kg.relations, kg.tails
    head_offsets, head_pairs, head_triplets = _index_direction(
        heads, tails, relations, kg.num_entities)
    tail_offsets, tail_pairs, tail_triplets = _index_direction(
        tails, heads, relations, kg.num_entities)
    return AdjacencyIndex(
        num_entities=kg.num_entities,
        head_offsets=head_offsets,
        head_pairs=head_pairs,
        head_triplets=head_triplets,
        tail_offsets=tail_offsets,
        tail_pairs=tail_pairs,
        tail_triplets=tail_triplets,
    )
