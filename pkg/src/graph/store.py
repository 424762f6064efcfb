"""
Triplet storage: vocabularies, knowledge graphs and TSV/candidate file IO
"""
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from src.errors import CandidateDataError, TripletParseError, VocabularyError

logger = structlog.get_logger(__name__)

PathLike = Union[str, os.PathLike]
VocabMode = Literal['build', 'reuse']

SPLIT_NAMES = ('train', 'valid', 'test')
SPLIT_SUFFIXES = ('.txt', '.tsv')


class Vocabulary:
    """Dense label <-> id mapping, ids assigned by first appearance"""

    def __init__(self, labels: Iterable[str] = ()):
        self._labels: List[str] = []
        self._ids: Dict[str, int] = {}
        for label in labels:
            self.add(label)

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label: str) -> bool:
        return label in self._ids

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._labels == other._labels

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(self._labels)

    def add(self, label: str) -> int:
        """Return the id of label, assigning the next dense id if it is new"""
        if '\t' in label or '\n' in label:
            raise VocabularyError(f"Label contains a tab or newline: {label!r}")
        existing = self._ids.get(label)
        if existing is not None:
            return existing
        new_id = len(self._labels)
        self._labels.append(label)
        self._ids[label] = new_id
        return new_id

    def id_of(self, label: str) -> int:
        try:
            return self._ids[label]
        except KeyError:
            raise VocabularyError(f"Unknown label {label!r}") from None

    def label_of(self, index: int) -> str:
        return self._labels[index]

    def digest(self) -> bytes:
        """SHA-256 over the ordered labels, stored in checkpoints"""
        return hashlib.sha256('\n'.join(self._labels).encode('utf-8')).digest()


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """Entity/relation vocabularies plus the triplet multiset T

    triplets is an int64 array of shape (|T|, 3) holding (head, relation, tail)
    rows in load order.
    """
    num_entities: int
    num_relations: int
    triplets: np.ndarray
    entity_vocab: Optional[Vocabulary] = field(default=None, compare=False)
    relation_vocab: Optional[Vocabulary] = field(default=None, compare=False)

    def __post_init__(self):
        triplets = np.ascontiguousarray(self.triplets, dtype=np.int64).reshape(-1, 3)
        triplets.setflags(write=False)
        object.__setattr__(self, 'triplets', triplets)
        if len(triplets):
            if triplets.min() < 0:
                raise VocabularyError("Negative id in triplets")
            if triplets[:, [0, 2]].max() >= self.num_entities:
                raise VocabularyError(
                    f"Entity id out of range for {self.num_entities} entities")
            if triplets[:, 1].max() >= self.num_relations:
                raise VocabularyError(
                    f"Relation id out of range for {self.num_relations} relations")
        if self.entity_vocab is not None and len(self.entity_vocab) != self.num_entities:
            raise VocabularyError("Entity vocabulary size differs from num_entities")
        if self.relation_vocab is not None and len(self.relation_vocab) != self.num_relations:
            raise VocabularyError("Relation vocabulary size differs from num_relations")

    def __len__(self) -> int:
        return len(self.triplets)

    @property
    def heads(self) -> np.ndarray:
        return self.triplets[:, 0]

    @property
    def relations(self) -> np.ndarray:
        return self.triplets[:, 1]

    @property
    def tails(self) -> np.ndarray:
        return self.triplets[:, 2]

    def with_triplets(self, triplets: np.ndarray) -> 'KnowledgeGraph':
        """Same vocabularies, different triplet multiset"""
        return KnowledgeGraph(self.num_entities, self.num_relations, triplets,
                              self.entity_vocab, self.relation_vocab)


@dataclass(frozen=True, eq=False)
class DatasetSplits:
    """train/valid/test graphs sharing one pair of vocabularies"""
    train: KnowledgeGraph
    valid: KnowledgeGraph
    test: KnowledgeGraph
    candidates: Optional[np.ndarray] = None

    @property
    def entity_vocab(self) -> Optional[Vocabulary]:
        return self.train.entity_vocab

    @property
    def relation_vocab(self) -> Optional[Vocabulary]:
        return self.train.relation_vocab

    def split(self, name: str) -> KnowledgeGraph:
        if name not in SPLIT_NAMES:
            raise ValueError(f"Unknown split {name!r}")
        return getattr(self, name)

    def union(self) -> KnowledgeGraph:
        """All splits concatenated; the triplet set T of the filtered protocol"""
        stacked = np.concatenate([self.train.triplets, self.valid.triplets, self.test.triplets])
        return self.train.with_triplets(stacked)


def _read_triplet_ids(path: PathLike, entity_vocab: Vocabulary, relation_vocab: Vocabulary,
                      mode: VocabMode) -> np.ndarray:
    if mode not in ('build', 'reuse'):
        raise ValueError(f"Unknown vocab mode {mode!r}")
    rows: List[Tuple[int, int, int]] = []
    entity_lookup = entity_vocab.add if mode == 'build' else entity_vocab.id_of
    relation_lookup = relation_vocab.add if mode == 'build' else relation_vocab.id_of
    with open(path, 'r', encoding='utf-8', newline='\n') as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip('\n').rstrip('\r')
            if not line:
                continue
            fields = line.split('\t')
            if len(fields) != 3:
                raise TripletParseError(str(path), line_number,
                                        f"expected 3 tab-separated fields, got {len(fields)}")
            head, relation, tail = fields
            try:
                rows.append((entity_lookup(head), relation_lookup(relation), entity_lookup(tail)))
            except VocabularyError as e:
                raise VocabularyError(f"{path}:{line_number}: {e}") from None
    return np.asarray(rows, dtype=np.int64).reshape(-1, 3)


def load_triplets(path: PathLike, entity_vocab: Optional[Vocabulary] = None,
                  relation_vocab: Optional[Vocabulary] = None,
                  mode: VocabMode = 'build') -> KnowledgeGraph:
    """Load a `head<TAB>relation<TAB>tail` file

    In build mode unseen labels get the next dense id (the passed vocabularies
    are extended in place); in reuse mode every label must already exist.
    """
    if mode == 'reuse' and (entity_vocab is None or relation_vocab is None):
        raise VocabularyError("Reuse mode needs both vocabularies")
    entity_vocab = entity_vocab if entity_vocab is not None else Vocabulary()
    relation_vocab = relation_vocab if relation_vocab is not None else Vocabulary()
    triplets = _read_triplet_ids(path, entity_vocab, relation_vocab, mode)
    logger.debug("Loaded triplets", path=str(path), triplets=len(triplets),
                 entities=len(entity_vocab), relations=len(relation_vocab))
    return KnowledgeGraph(len(entity_vocab), len(relation_vocab), triplets,
                          entity_vocab, relation_vocab)


def save_triplets(kg: KnowledgeGraph, path: PathLike) -> None:
    """Write canonical TSV, using labels when the graph carries vocabularies"""
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for head, relation, tail in kg.triplets.tolist():
            if kg.entity_vocab is not None and kg.relation_vocab is not None:
                f.write(f"{kg.entity_vocab.label_of(head)}\t"
                        f"{kg.relation_vocab.label_of(relation)}\t"
                        f"{kg.entity_vocab.label_of(tail)}\n")
            else:
                f.write(f"{head}\t{relation}\t{tail}\n")


def save_vocabulary(vocab: Vocabulary, path: PathLike) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for index, label in enumerate(vocab.labels):
            f.write(f"{label}\t{index}\n")


def load_vocabulary(path: PathLike) -> Vocabulary:
    """Read a `label<TAB>id` file; ids must be exactly 0..n-1"""
    entries: Dict[int, str] = {}
    with open(path, 'r', encoding='utf-8', newline='\n') as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip('\n').rstrip('\r')
            if not line:
                continue
            fields = line.split('\t')
            if len(fields) != 2:
                raise TripletParseError(str(path), line_number,
                                        f"expected label<TAB>id, got {len(fields)} fields")
            try:
                index = int(fields[1])
            except ValueError:
                raise TripletParseError(str(path), line_number,
                                        f"id is not an integer: {fields[1]!r}") from None
            if index in entries:
                raise VocabularyError(f"{path}:{line_number}: duplicate id {index}")
            entries[index] = fields[0]
    if sorted(entries) != list(range(len(entries))):
        raise VocabularyError(f"{path}: ids are not dense")
    vocab = Vocabulary(entries[i] for i in range(len(entries)))
    if len(vocab) != len(entries):
        raise VocabularyError(f"{path}: duplicate labels")
    return vocab


def find_split_file(directory: PathLike, split: str) -> Path:
    directory = Path(directory)
    for suffix in SPLIT_SUFFIXES:
        candidate = directory / f"{split}{suffix}"
        if candidate.exists():
            return candidate
    return directory / f"{split}{SPLIT_SUFFIXES[0]}"


def load_dataset(directory: PathLike, entity_vocab: Optional[Vocabulary] = None,
                 relation_vocab: Optional[Vocabulary] = None,
                 mode: VocabMode = 'build',
                 candidate_file: Optional[PathLike] = None) -> DatasetSplits:
    """Load train/valid/test splits with one shared vocabulary

    A missing valid or test split is treated as empty; a missing train split
    is an error raised by open().
    """
    entity_vocab = entity_vocab if entity_vocab is not None else Vocabulary()
    relation_vocab = relation_vocab if relation_vocab is not None else Vocabulary()
    arrays = {}
    for split in SPLIT_NAMES:
        path = find_split_file(directory, split)
        if split != 'train' and not path.exists():
            arrays[split] = np.zeros((0, 3), dtype=np.int64)
            continue
        arrays[split] = _read_triplet_ids(path, entity_vocab, relation_vocab, mode)
    graphs = {
        split: KnowledgeGraph(len(entity_vocab), len(relation_vocab), arrays[split],
                              entity_vocab, relation_vocab)
        for split in SPLIT_NAMES
    }
    candidates = None
    if candidate_file is not None:
        candidates = load_candidates(candidate_file, entity_vocab)
    logger.info("Loaded dataset", directory=str(directory), entities=len(entity_vocab),
                relations=len(relation_vocab),
                **{split: len(graph) for split, graph in graphs.items()})
    return DatasetSplits(graphs['train'], graphs['valid'], graphs['test'], candidates)


def load_candidates(path: PathLike, entity_vocab: Vocabulary,
                    num_queries: Optional[int] = None) -> np.ndarray:
    """One line of space-separated entity labels per test triplet"""
    rows: List[List[int]] = []
    with open(path, 'r', encoding='utf-8', newline='\n') as f:
        for line_number, line in enumerate(f, start=1):
            labels = line.split()
            if not labels:
                raise CandidateDataError(f"{path}:{line_number}: empty candidate line",
                                         triplet_index=line_number - 1)
            try:
                row = [entity_vocab.id_of(label) for label in labels]
            except VocabularyError as e:
                raise CandidateDataError(f"{path}:{line_number}: {e}",
                                         triplet_index=line_number - 1) from None
            if rows and len(row) != len(rows[0]):
                raise CandidateDataError(
                    f"{path}:{line_number}: expected {len(rows[0])} candidates, got {len(row)}",
                    triplet_index=line_number - 1)
            rows.append(row)
    if num_queries is not None and len(rows) < num_queries:
        raise CandidateDataError(f"{path}: missing candidate line", triplet_index=len(rows))
    return np.asarray(rows, dtype=np.int64).reshape(len(rows), -1)


def generate_synthetic_graph(num_entities: int = 50, num_relations: int = 5,
                             num_triplets: int = 200, seed: int = 0) -> KnowledgeGraph:
    """Uniformly random multigraph used by oracles and property checks"""
    rng = np.random.default_rng(seed)
    triplets = np.stack([
        rng.integers(0, num_entities, num_triplets),
        rng.integers(0, num_relations, num_triplets),
        rng.integers(0, num_entities, num_triplets),
    ], axis=1)
    return KnowledgeGraph(num_entities, num_relations, triplets)


def triplets_from_pairs(pairs: Sequence[Tuple[int, int, int]], num_entities: int,
                        num_relations: int) -> KnowledgeGraph:
    return KnowledgeGraph(num_entities, num_relations,
                          np.asarray(pairs, dtype=np.int64).reshape(-1, 3))
