"""Invariant scalar features and exactly equivariant models.

Builds the six translation-reduced edge vectors and their 42 pairwise
inner-product features, verifies they are unchanged by random rotations,
reflections, and translations, and contrasts an equivariant-by-construction
model with the raw-input baseline under the same transformations.
"""

import numpy as np

from scalarspring.dataset import DatasetConfig, sample_initial_state
from scalarspring.geometry import act, sample_orthogonal
from scalarspring.models import make_model
from scalarspring.physics import SystemParams
from scalarspring.scalars import edge_vectors, feature_names, scalar_features

params = SystemParams()
rng = np.random.default_rng(1)
state = sample_initial_state(rng, params, DatasetConfig())

edges = edge_vectors(state, params.qo, params.g)
features = scalar_features(edges)
names = feature_names()
print("the first few of the 42 invariant features:")
for name, value in list(zip(names, features))[:6]:
    print(f"  {name:38s} = {value:+.4f}")

print("\ninvariance under 200 random group elements (incl. reflections):")
worst = 0.0
for seed in range(200):
    r = sample_orthogonal(seed)
    w = rng.standard_normal(3) * 5.0
    moved, qo2, g2 = act(r, w, state, params.qo, params.g)
    moved_features = scalar_features(edge_vectors(moved, qo2, g2))
    worst = max(worst, np.abs(moved_features - features).max())
print(f"  worst absolute feature change: {worst:.2e}")

print("\nequivariance of the dynamics models (random weights, one rotation):")
r = sample_orthogonal(7)
w = np.array([2.0, -1.0, 0.5])
moved, qo2, g2 = act(r, w, state, params.qo, params.g)
for kind in ("scalars-node", "mlp-node"):
    model = make_model(kind, hidden_dims=(16, 16), init_seed=3)
    model.weights = [v + 0.1 * rng.standard_normal(v.shape) for v in model.weights]
    before = model.dynamics(state, params.qo, params.g)
    rotated = np.concatenate([r @ before.q1, r @ before.q2, r @ before.p1, r @ before.p2])
    after = model.dynamics(moved, qo2, g2).to_flat()
    gap = np.linalg.norm(after - rotated) / np.linalg.norm(rotated)
    print(f"  {kind:13s}: relative equivariance violation {gap:.2e}")
print("\nthe scalar-feature model commutes with the group action to rounding;")
print("the raw-input baseline does not.")
