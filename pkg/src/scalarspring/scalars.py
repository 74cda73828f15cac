"""Translation-reduced edge vectors and the invariant scalar features built from them.

The six edges, in frozen order, are

    e0 = q1 - qo,  e1 = q2 - qo,  e2 = q1 - q2,  e3 = p1,  e4 = p2,  e5 = g.

Subtracting the pivot removes the translation degree of freedom; e2 is
redundant (e2 = e0 - e1) but kept because the spring energy is naturally a
function of it.  The feature vector collects sigma(e_i . e_j) over the 21
unordered pairs i <= j and every transform sigma, ordered pair-major then
transform-minor:

    features[k * n_transforms + t] = transforms[t](dot(e_i, e_j)),

with k the pair index in the row-major i <= j enumeration.  This ordering is
a compatibility contract: saved model parameters refer to it by
FEATURE_VERSION and a checkpoint with a different version must be rejected.

Every feature is unchanged by any simultaneous orthogonal map of the six
edges (including reflections) because it only sees inner products, and by any
translation of the positions because only differences enter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .physics import PhaseState

N_EDGES = 6
EDGE_NAMES = ("q1-qo", "q2-qo", "q1-q2", "p1", "p2", "g")
PAIRS = tuple((i, j) for i in range(N_EDGES) for j in range(i, N_EDGES))
N_PAIRS = len(PAIRS)  # 21

FEATURE_VERSION = 1
DEFAULT_TRANSFORMS = ("identity", "soft_sqrt_abs")

# Smoothing for the default square-root compressor: sqrt(softabs(x)) with
# softabs(x) = sqrt(x^2 + delta).  The literal sqrt(|x|) has derivative
# 0.5/sqrt(|x|), which is unbounded where an inner product crosses zero;
# those crossings happen constantly along trajectories (q.p changes sign
# every oscillation), and the resulting gradient spikes make both model
# families untrainable, while any surviving |.| kink degrades the solver to
# low order at every crossing.  The smooth form keeps the same monotone
# dynamic-range compression (equal to sqrt|x| up to delta effects near 0),
# is infinitely differentiable, and preserves exact invariance.
SOFT_ABS_DELTA = 0.01  # softabs(0) = 0.1


def _soft_sqrt_abs_np(x):
    return np.sqrt(np.sqrt(x * x + SOFT_ABS_DELTA))


def _soft_sqrt_abs_traced(v):
    return ad.sqrt(ad.sqrt(ad.add(ad.mul(v, v), SOFT_ABS_DELTA)))


# name -> (numpy implementation, traced implementation)
TRANSFORMS = {
    "identity": (lambda x: x, lambda v: v),
    "sqrt_abs": (lambda x: np.sqrt(np.abs(x)), ad.sqrt_abs),
    "soft_sqrt_abs": (_soft_sqrt_abs_np, _soft_sqrt_abs_traced),
}


class UnknownTransformError(ValueError):
    pass


def _check_transforms(transforms) -> tuple[str, ...]:
    transforms = tuple(transforms)
    for name in transforms:
        if name not in TRANSFORMS:
            raise UnknownTransformError(f"unknown scalar transform {name!r}")
    if not transforms:
        raise UnknownTransformError("need at least one scalar transform")
    return transforms


@dataclass(frozen=True)
class EdgeSet:
    """The six edge vectors of one state, in the frozen order above."""

    vectors: tuple

    def __post_init__(self):
        if len(self.vectors) != N_EDGES:
            raise ValueError(f"expected {N_EDGES} edges, got {len(self.vectors)}")
        object.__setattr__(
            self, "vectors", tuple(np.asarray(v, dtype=np.float64) for v in self.vectors)
        )

    def __iter__(self):
        return iter(self.vectors)

    def __getitem__(self, i):
        return self.vectors[i]


def edge_vectors(state: PhaseState, qo: np.ndarray, g: np.ndarray) -> EdgeSet:
    """Reduce one state to its six translation-invariant edge vectors."""
    qo = np.asarray(qo, dtype=np.float64)
    e0 = state.q1 - qo
    e1 = state.q2 - qo
    # built from the reduced edges, not q1 - q2, so e2 == e0 - e1 bit-exactly
    return EdgeSet((e0, e1, e0 - e1, state.p1, state.p2, np.asarray(g, dtype=np.float64)))


def feature_length(transforms=DEFAULT_TRANSFORMS) -> int:
    return N_PAIRS * len(_check_transforms(transforms))


def feature_names(transforms=DEFAULT_TRANSFORMS) -> list[str]:
    """Human-readable labels in feature order, for docs and checkpoints."""
    transforms = _check_transforms(transforms)
    names = []
    for i, j in PAIRS:
        for t in transforms:
            names.append(f"{t}(<{EDGE_NAMES[i]}, {EDGE_NAMES[j]}>)")
    return names


def scalar_features(edges: EdgeSet, transforms=DEFAULT_TRANSFORMS) -> np.ndarray:
    """Invariant feature vector of one edge set, length 21 * len(transforms)."""
    transforms = _check_transforms(transforms)
    out = np.empty(N_PAIRS * len(transforms))
    k = 0
    for i, j in PAIRS:
        d = float(np.dot(edges[i], edges[j]))
        for t in transforms:
            out[k] = TRANSFORMS[t][0](d)
            k += 1
    return out


# ---------------------------------------------------------------------------
# traced, batched pipeline used inside the models
# ---------------------------------------------------------------------------

# columns of the flattened 6x6 Gram matrix holding the i <= j pairs
_LOWER_TRI_IDX = np.array([i * N_EDGES + j for i, j in PAIRS], dtype=np.intp)


def edge_matrix(z: ad.Var, qo: np.ndarray, g_rows: ad.Var) -> ad.Var:
    """Edges of a batch of flat states z (B, 12), stacked as (B, 18).

    Row b holds the six edges of state b as a flattened 6x3 matrix in the
    frozen edge order.  `g_rows` is the gravity constant already recorded on
    the tape with shape (B, 3).
    """
    batch = z.value.shape[0]
    q1 = ad.cols(z, 0, 3)
    q2 = ad.cols(z, 3, 6)
    p1 = ad.cols(z, 6, 9)
    p2 = ad.cols(z, 9, 12)
    qo_rows = np.broadcast_to(np.asarray(qo, dtype=np.float64), (batch, 3))
    e0 = ad.sub(q1, qo_rows)
    e1 = ad.sub(q2, qo_rows)
    return ad.hstack([e0, e1, ad.sub(e0, e1), p1, p2, g_rows])


def edge_vars(z: ad.Var, qo: np.ndarray, g: np.ndarray) -> list[ad.Var]:
    """The six edges of a batch as separate (B, 3) variables."""
    batch = z.value.shape[0]
    g_rows = z.tape.constant(np.broadcast_to(np.asarray(g, dtype=np.float64), (batch, 3)))
    e = edge_matrix(z, qo, g_rows)
    return [ad.cols(e, 3 * s, 3 * s + 3) for s in range(N_EDGES)]


def _feature_permutation(n_transforms: int) -> np.ndarray:
    # transform-major blocks -> pair-major, transform-minor contract order
    perm = np.empty(N_PAIRS * n_transforms, dtype=np.intp)
    for k in range(N_PAIRS):
        for t in range(n_transforms):
            perm[k * n_transforms + t] = t * N_PAIRS + k
    return perm


def feature_vars(edges: ad.Var, transforms=DEFAULT_TRANSFORMS) -> ad.Var:
    """Feature matrix (B, 21 * len(transforms)) from an edge matrix (B, 18).

    One batched product gives the whole Gram matrix; the unordered pairs are
    its lower triangle.
    """
    transforms = _check_transforms(transforms)
    gram = ad.bmm(edges, ad.btr(edges, (N_EDGES, 3)), (N_EDGES, 3, N_EDGES))
    dots = ad.select_cols(gram, _LOWER_TRI_IDX)
    blocks = [TRANSFORMS[t][1](dots) for t in transforms]
    if len(blocks) == 1:
        stacked = blocks[0]
    else:
        stacked = ad.hstack(blocks)
    return ad.permute_cols(stacked, _feature_permutation(len(transforms)))
