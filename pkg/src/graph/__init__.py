"""
Knowledge graph storage and indexing package
"""
from .adjacency import AdjacencyIndex, build_adjacency
from .filtering import KnownTripletSet, empty_filter, filter_index
from .store import (
    DatasetSplits,
    KnowledgeGraph,
    Vocabulary,
    generate_synthetic_graph,
    load_candidates,
    load_dataset,
    load_triplets,
    load_vocabulary,
    save_triplets,
    save_vocabulary,
    triplets_from_pairs,
)

__all__ = [
    'AdjacencyIndex',
    'DatasetSplits',
    'KnowledgeGraph',
    'KnownTripletSet',
    'Vocabulary',
    'build_adjacency',
    'empty_filter',
    'filter_index',
    'generate_synthetic_graph',
    'load_candidates',
    'load_dataset',
    'load_triplets',
    'load_vocabulary',
    'save_triplets',
    'save_vocabulary',
    'triplets_from_pairs',
]
