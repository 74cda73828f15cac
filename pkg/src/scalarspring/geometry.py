"""Fixed-dimension 3-vector arithmetic and the rotation/translation group action.

Vectors are plain float64 numpy arrays of shape (3,); orthogonal matrices are
(3, 3) arrays with R^T R = I.  The sampler covers both components of O(3)
(det +1 and det -1), which matters for testing reflection invariance.
"""

from __future__ import annotations

import numpy as np

from .physics import PhaseState


def dot(a: np.ndarray, b: np.ndarray) -> float:
    """Scalar product a . b."""
    return float(np.dot(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)))


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product a x b."""
    return np.cross(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def sample_orthogonal(seed: int) -> np.ndarray:
    """Draw a random 3x3 orthogonal matrix, deterministic in the seed.

    QR-orthonormalization of a seeded Gaussian matrix, sign-normalized so the
    factorization is unique, then one column is sign-flipped with probability
    1/2 so both determinant components are covered across seeds.
    """
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(m)
    q = q * np.where(np.diag(r) < 0.0, -1.0, 1.0)
    if rng.random() < 0.5:
        q = q.copy()
        q[:, 0] = -q[:, 0]
    return q


def act(
    R: np.ndarray,
    w: np.ndarray,
    state: PhaseState,
    qo: np.ndarray,
    g: np.ndarray,
) -> tuple[PhaseState, np.ndarray, np.ndarray]:
    """Apply the group element (R, w): rotate everything, translate positions only.

    Returns the transformed state plus the co-transformed pivot R qo + w and
    gravity R g.  Momenta and gravity receive no translation term.
    """
    R = np.asarray(R, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    new_state = PhaseState(
        q1=R @ state.q1 + w,
        q2=R @ state.q2 + w,
        p1=R @ state.p1,
        p2=R @ state.p2,
    )
    return new_state, R @ np.asarray(qo, dtype=np.float64) + w, R @ np.asarray(g, dtype=np.float64)
