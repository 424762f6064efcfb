"""
Score functions and head/tail context functions of the four families

    family    score f_r(h, t)              g_h(h, r)          g_t(t, r)
    transe    -||h + r - t||               h + r              t - r
    distmult  <r, h, t>                    h * r              t * r
    rotate    -||h o r - t||               h o r              t o conj(r)
    ote       -sum_i ||D_i Q_i h_i - t_i||  D_i Q_i h_i        Q_i^T D_i^-1 t_i

with D_i = diag(exp(s_i)) and Q_i = phi(M_i) the Gram-Schmidt map of group i.

All functions broadcast over leading batch axes: entity arrays are (..., n)
and the RelationOperators passed in must be gathered to the same batch shape
(or be a single relation).
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from src.errors import DimensionMismatchError

from .orthogonal import gram_schmidt_backward, gram_schmidt_qr
from .spec import ModelSpec

SCALE_CLAMP = 10.0


@dataclass(eq=False)
class RelationOperators:
    """Relation parameters in the form the context functions consume

    transe/distmult: vectors. rotate: phases with cos/sin. ote: phi(M) blocks
    q, the Gram-Schmidt triangular factor r, clamped exp(s) and the mask of
    unclamped scale entries.
    """
    family: str
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def take(self, relation_ids) -> 'RelationOperators':
        """Gather the operators of the given relation ids (any index shape)"""
        return RelationOperators(self.family,
                                 {name: array[relation_ids] for name, array in self.arrays.items()})


def build_operators(spec: ModelSpec, relation_params: Dict[str, np.ndarray],
                    seed: int = 0) -> RelationOperators:
    """Precompute per-relation operators (Gram-Schmidt runs here for OTE)"""
    if spec.family in ('transe', 'distmult'):
        return RelationOperators(spec.family, {'vectors': relation_params['vectors']})
    if spec.family == 'rotate':
        phases = relation_params['phases']
        return RelationOperators(spec.family, {
            'phases': phases,
            'cos': np.cos(phases),
            'sin': np.sin(phases),
        })
    raw_scales = relation_params['scales'].astype(np.float64)
    q, r = gram_schmidt_qr(relation_params['matrices'], seed=seed)
    return RelationOperators(spec.family, {
        'q': q,
        'r': r,
        'scale': np.exp(np.clip(raw_scales, -SCALE_CLAMP, SCALE_CLAMP)),
        'inverse_scale': np.exp(-np.clip(raw_scales, -SCALE_CLAMP, SCALE_CLAMP)),
        'scale_active': (raw_scales > -SCALE_CLAMP) & (raw_scales < SCALE_CLAMP),
    })


def _check_dim(spec: ModelSpec, *vectors: np.ndarray) -> None:
    for vector in vectors:
        if np.shape(vector)[-1:] != (spec.entity_dim,):
            raise DimensionMismatchError(
                f"Expected trailing dimension {spec.entity_dim}, got shape {np.shape(vector)}")


def _norm(d: np.ndarray, order: int) -> np.ndarray:
    if order == 1:
        return np.sum(np.abs(d), axis=-1, dtype=np.float64)
    return np.sqrt(np.sum(np.square(d, dtype=np.float64), axis=-1))


def _norm_gradient(d: np.ndarray, order: int) -> np.ndarray:
    """d||d||/dd; the subgradient at 0 is 0 for both orders"""
    if order == 1:
        return np.sign(d)
    norm = _norm(d, 2)[..., None]
    return np.divide(d, norm, out=np.zeros(np.broadcast(d, norm).shape), where=norm > 0)


def _split_complex(x: np.ndarray, half: int) -> Tuple[np.ndarray, np.ndarray]:
    return x[..., :half], x[..., half:]


def _complex_norm(d: np.ndarray, half: int, order: int) -> np.ndarray:
    """Norm of a complex vector in split layout; order 1 sums the moduli |z_i|"""
    if order == 2:
        return _norm(d, 2)
    re, im = _split_complex(d, half)
    return np.sum(np.hypot(re, im), axis=-1, dtype=np.float64)


def _complex_norm_gradient(d: np.ndarray, half: int, order: int) -> np.ndarray:
    """Per pair (re, im) / |z| for order 1, 0 where |z| = 0"""
    if order == 2:
        return _norm_gradient(d, 2)
    d = np.asarray(d, dtype=np.float64)
    modulus = np.hypot(*_split_complex(d, half))
    modulus = np.concatenate([modulus, modulus], axis=-1)
    return np.divide(d, modulus, out=np.zeros(d.shape), where=modulus > 0)


def _groups(spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[:-1] + (spec.ote_groups, spec.group_size))


def _ungroup(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[:-2] + (-1,))


def head_context(spec: ModelSpec, h: np.ndarray, ops: RelationOperators) -> np.ndarray:
    """g_h(h, r): the embedding h's relation r points at"""
    _check_dim(spec, h)
    if spec.family == 'transe':
        return h + ops['vectors']
    if spec.family == 'distmult':
        return h * ops['vectors']
    if spec.family == 'rotate':
        re, im = _split_complex(h, spec.complex_dim)
        cos, sin = ops['cos'], ops['sin']
        return np.concatenate([re * cos - im * sin, re * sin + im * cos], axis=-1)
    rotated = np.einsum('...lij,...lj->...li', ops['q'], _groups(spec, h))
    return _ungroup(ops['scale'] * rotated)


def tail_context(spec: ModelSpec, t: np.ndarray, ops: RelationOperators) -> np.ndarray:
    """g_t(t, r): the inverse operation of g_h applied to a tail"""
    _check_dim(spec, t)
    if spec.family == 'transe':
        return t - ops['vectors']
    if spec.family == 'distmult':
        return t * ops['vectors']
    if spec.family == 'rotate':
        re, im = _split_complex(t, spec.complex_dim)
        cos, sin = ops['cos'], ops['sin']
        return np.concatenate([re * cos + im * sin, im * cos - re * sin], axis=-1)
    unscaled = ops['inverse_scale'] * _groups(spec, t)
    return _ungroup(np.einsum('...lji,...lj->...li', ops['q'], unscaled))


def match(spec: ModelSpec, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Compare a transformed head x = g_h(h, r) with t; score = match(g_h(h, r), t)"""
    if spec.family == 'distmult':
        return np.sum(x * t, axis=-1, dtype=np.float64)
    d = x - t
    if spec.family == 'ote':
        return -np.sum(_norm(_groups(spec, d), spec.norm_order), axis=-1)
    if spec.family == 'rotate':
        return -_complex_norm(d, spec.complex_dim, spec.norm_order)
    return -_norm(d, spec.norm_order)


def score(spec: ModelSpec, h: np.ndarray, ops: RelationOperators, t: np.ndarray) -> np.ndarray:
    """f_r(h, t), higher is more plausible for every family"""
    _check_dim(spec, h, t)
    if spec.family == 'distmult':
        return np.sum(h * ops['vectors'] * t, axis=-1, dtype=np.float64)
    return match(spec, head_context(spec, h, ops), t)


def score_against(spec: ModelSpec, queries: np.ndarray, candidates: np.ndarray,
                  max_elements: int = 1 << 24) -> np.ndarray:
    """match() of every transformed query (B, n) against every candidate (C, n)

    Returns a (B, C) float64 matrix. Distance families are chunked so at most
    max_elements differences are alive at once.
    """
    _check_dim(spec, queries, candidates)
    if spec.family == 'distmult':
        return np.asarray(queries, dtype=np.float64) @ np.asarray(candidates, dtype=np.float64).T
    rows = max(1, max_elements // max(1, candidates.size))
    out = np.empty((len(queries), len(candidates)), dtype=np.float64)
    for start in range(0, len(queries), rows):
        block = queries[start:start + rows]
        out[start:start + rows] = match(spec, block[:, None, :], candidates[None, :, :])
    return out


@dataclass(eq=False)
class ScoreGradients:
    """Partial derivatives of f_r(h, t) per batch row

    relation holds operator-level gradients: 'vectors' (transe/distmult),
    'phases' (rotate), 'q' and 'scales' (ote; 'q' is w.r.t. phi(M)).
    """
    head: np.ndarray
    tail: np.ndarray
    relation: Dict[str, np.ndarray]


def score_gradients(spec: ModelSpec, h: np.ndarray, ops: RelationOperators,
                    t: np.ndarray) -> ScoreGradients:
    """Closed-form gradients of score() w.r.t. h, t and the relation"""
    _check_dim(spec, h, t)
    h = np.asarray(h, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if spec.family == 'transe':
        g = -_norm_gradient(h + ops['vectors'] - t, spec.norm_order)
        return ScoreGradients(head=g, tail=-g, relation={'vectors': g})
    if spec.family == 'distmult':
        r = ops['vectors']
        return ScoreGradients(head=r * t, tail=h * r, relation={'vectors': h * t})
    if spec.family == 'rotate':
        half = spec.complex_dim
        cos, sin = ops['cos'], ops['sin']
        h_re, h_im = _split_complex(h, half)
        g = -_complex_norm_gradient(head_context(spec, h, ops) - t, half, spec.norm_order)
        g_re, g_im = _split_complex(g, half)
        head = np.concatenate([g_re * cos + g_im * sin, g_im * cos - g_re * sin], axis=-1)
        phases = g_re * (-h_re * sin - h_im * cos) + g_im * (h_re * cos - h_im * sin)
        return ScoreGradients(head=head, tail=-g, relation={'phases': phases})
    q = ops['q']
    scale = ops['scale']
    h_groups = _groups(spec, h)
    rotated = np.einsum('...lij,...lj->...li', q, h_groups)
    d = scale * rotated - _groups(spec, t)
    g = -_norm_gradient(d, spec.norm_order)
    scaled_g = scale * g
    head = np.einsum('...lji,...lj->...li', q, scaled_g)
    scales = np.where(ops['scale_active'], scaled_g * rotated, 0.0)
    grad_q = scaled_g[..., :, None] * h_groups[..., None, :]
    return ScoreGradients(head=_ungroup(head), tail=-_ungroup(g),
                          relation={'q': grad_q, 'scales': scales})


def relation_param_gradients(spec: ModelSpec, ops: RelationOperators, relation_ids: np.ndarray,
                             grads: Dict[str, np.ndarray]) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """Sum per-row relation gradients by relation and map them to raw parameters

    ops must be the full (ungathered) operator table. Returns the touched
    relation ids and gradients aligned with them, keyed like relation_params.
    """
    unique, inverse = np.unique(relation_ids, return_inverse=True)
    summed = {}
    for name, grad in grads.items():
        total = np.zeros((len(unique),) + grad.shape[1:], dtype=np.float64)
        np.add.at(total, inverse, grad)
        summed[name] = total
    if spec.family != 'ote':
        return unique, summed
    matrices = gram_schmidt_backward(ops['q'][unique], ops['r'][unique], summed['q'])
    return unique, {'matrices': matrices, 'scales': summed['scales']}


def operators_for(spec: ModelSpec, relation_params: Dict[str, np.ndarray],
                  relation_ids: Optional[np.ndarray] = None, seed: int = 0) -> RelationOperators:
    """Operators for a subset of relations (all when relation_ids is None)"""
    if relation_ids is None:
        return build_operators(spec, relation_params, seed)
    subset = {name: array[relation_ids] for name, array in relation_params.items()}
    return build_operators(spec, subset, seed)
