import numpy as np
import pytest

from scalarspring import autodiff as ad
from scalarspring import scalars
from scalarspring.geometry import act, sample_orthogonal
from scalarspring.physics import PhaseState

from conftest import random_state_flat


def _brute_force_features(vectors, transforms):
    """Independent oracle: enumerate unordered pairs directly."""
    out = []
    for i in range(6):
        for j in range(i, 6):
            d = sum(vectors[i][k] * vectors[j][k] for k in range(3))
            for name in transforms:
                if name == "sqrt_abs":
                    out.append(np.sqrt(abs(d)))
                elif name == "soft_sqrt_abs":
                    out.append((d * d + scalars.SOFT_ABS_DELTA) ** 0.25)
                else:
                    out.append(d)
    return np.array(out)


def test_edge_vectors_zero_pivot():
    s = PhaseState(q1=(1, 2, 3), q2=(4, 5, 6), p1=(7, 8, 9), p2=(1, 1, 1))
    e = scalars.edge_vectors(s, np.zeros(3), np.array([0, 0, -9.8]))
    np.testing.assert_array_equal(e[0], s.q1)
    np.testing.assert_array_equal(e[1], s.q2)
    np.testing.assert_array_equal(e[2], s.q1 - s.q2)
    np.testing.assert_array_equal(e[3], s.p1)
    np.testing.assert_array_equal(e[4], s.p2)
    np.testing.assert_array_equal(e[5], [0, 0, -9.8])


def test_edge_vectors_translation_invariant():
    rng = np.random.default_rng(0)
    s = PhaseState.from_flat(random_state_flat(rng))
    qo, g = rng.standard_normal(3), rng.standard_normal(3)
    w = rng.standard_normal(3)
    moved, qo2, g2 = act(np.eye(3), w, s, qo, g)
    e1 = scalars.edge_vectors(s, qo, g)
    e2 = scalars.edge_vectors(moved, qo2, g2)
    for a, b in zip(e1, e2):
        np.testing.assert_allclose(a, b, atol=1e-14)


def test_edge_identity_e3():
    rng = np.random.default_rng(1)
    s = PhaseState.from_flat(random_state_flat(rng))
    e = scalars.edge_vectors(s, rng.standard_normal(3), rng.standard_normal(3))
    np.testing.assert_array_equal(e[2], e[0] - e[1])


def test_coincident_masses_zero_edge():
    s = PhaseState(q1=(1, 2, 3), q2=(1, 2, 3), p1=(0, 0, 0), p2=(0, 0, 0))
    e = scalars.edge_vectors(s, np.zeros(3), np.zeros(3))
    np.testing.assert_array_equal(e[2], np.zeros(3))


def test_feature_length_default():
    assert scalars.feature_length() == 42  # 21 pairs x 2 transforms
    assert scalars.feature_length(("identity",)) == 21


def test_unknown_transform_rejected():
    with pytest.raises(scalars.UnknownTransformError):
        scalars.feature_length(("identity", "cube"))
    with pytest.raises(scalars.UnknownTransformError):
        scalars.feature_length(())


def test_hand_enumerated_features_identity_transform():
    # e0=(1,0,0), e1=(0,2,0), rest zero, identity transform only: the only
    # nonzero entries are <e0,e0> = 1 and <e1,e1> = 4
    vectors = [np.zeros(3) for _ in range(6)]
    vectors[0] = np.array([1.0, 0, 0])
    vectors[1] = np.array([0.0, 2, 0])
    edges = scalars.EdgeSet(tuple(vectors))
    feats = scalars.scalar_features(edges, ("identity",))
    expected = _brute_force_features(vectors, ("identity",))
    np.testing.assert_array_equal(feats, expected)
    assert feats[0] == 1.0  # pair (0, 0)
    assert feats[6] == 4.0  # pair (1, 1): 6 pairs with i=0 come first
    nonzero = np.nonzero(feats)[0]
    np.testing.assert_array_equal(nonzero, [0, 6])


def test_features_match_brute_force_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        vectors = [rng.standard_normal(3) for _ in range(6)]
        edges = scalars.EdgeSet(tuple(vectors))
        feats = scalars.scalar_features(edges)
        expected = _brute_force_features(vectors, scalars.DEFAULT_TRANSFORMS)
        np.testing.assert_allclose(feats, expected, rtol=1e-14)


def test_group_action_preserves_edge_dot_products(params):
    rng = np.random.default_rng(30)
    for seed in range(50):
        state = PhaseState.from_flat(random_state_flat(rng))
        r = sample_orthogonal(seed)
        w = rng.standard_normal(3)
        moved, qo2, g2 = act(r, w, state, params.qo, params.g)
        e1 = scalars.edge_vectors(state, params.qo, params.g)
        e2 = scalars.edge_vectors(moved, qo2, g2)
        for i in range(6):
            for j in range(6):
                a = float(np.dot(e1[i], e1[j]))
                b = float(np.dot(e2[i], e2[j]))
                assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_features_invariant_under_o3():
    rng = np.random.default_rng(3)
    for seed in range(100):
        r = sample_orthogonal(seed)
        vectors = [rng.standard_normal(3) for _ in range(6)]
        base = scalars.scalar_features(scalars.EdgeSet(tuple(vectors)))
        rotated = scalars.scalar_features(scalars.EdgeSet(tuple(r @ v for v in vectors)))
        np.testing.assert_allclose(rotated, base, rtol=1e-12, atol=1e-12)


def test_feature_permutation_bookkeeping():
    # swapping two input vectors permutes features by the induced pair map
    rng = np.random.default_rng(4)
    vectors = [rng.standard_normal(3) for _ in range(6)]
    swapped = list(vectors)
    swapped[3], swapped[4] = swapped[4], swapped[3]
    base = scalars.scalar_features(scalars.EdgeSet(tuple(vectors)))
    perm = scalars.scalar_features(scalars.EdgeSet(tuple(swapped)))

    def pair_index(i, j):
        i, j = min(i, j), max(i, j)
        return scalars.PAIRS.index((i, j))

    swap = {3: 4, 4: 3}
    for k, (i, j) in enumerate(scalars.PAIRS):
        k2 = pair_index(swap.get(i, i), swap.get(j, j))
        for t in range(2):
            assert perm[k2 * 2 + t] == base[k * 2 + t]


def test_traced_features_match_numpy_path(params):
    rng = np.random.default_rng(5)
    batch = np.stack([random_state_flat(rng) for _ in range(7)])
    tape = ad.Tape()
    zv = tape.constant(batch)
    grows = tape.constant(np.broadcast_to(params.g, (7, 3)))
    feats = scalars.feature_vars(scalars.edge_matrix(zv, params.qo, grows))
    for b in range(7):
        state = PhaseState.from_flat(batch[b])
        edges = scalars.edge_vectors(state, params.qo, params.g)
        np.testing.assert_allclose(
            feats.value[b], scalars.scalar_features(edges), rtol=1e-13
        )


def test_feature_names_order():
    names = scalars.feature_names()
    assert len(names) == 42
    assert names[0] == "identity(<q1-qo, q1-qo>)"
    assert names[1] == "soft_sqrt_abs(<q1-qo, q1-qo>)"
    assert names[-1] == "soft_sqrt_abs(<g, g>)"


def test_literal_sqrt_transform_available():
    vectors = [np.full(3, 0.5), *[np.zeros(3)] * 5]
    edges = scalars.EdgeSet(tuple(vectors))
    feats = scalars.scalar_features(edges, ("sqrt_abs",))
    assert feats[0] == np.sqrt(0.75)  # literal sqrt|e0.e0|, no smoothing floor
