"""Acceptance suite: one test per exit criterion, each printing a PASS line.

Criteria 1, 2, and the trained-model half of criterion 6 share one full-scale
experiment (four model families x three seeds on the default 500-trajectory
dataset) and are marked `slow`; run them with plain `pytest`, or skip them
with `-m "not slow"`.  Everything else finishes in about a minute.
"""

import json
import pathlib
import time

import numpy as np
import pytest

from scalarspring import autodiff as ad
from scalarspring.cli import main as cli_main
from scalarspring.dataset import (
    DatasetConfig,
    generate_dataset,
    save_dataset,
    split_records,
)
from scalarspring.evaluate import angular_momentum_proj_flat, evaluate
from scalarspring.integrate import IntegratorConfig, rk4_step
from scalarspring.models import ScalarHnnModel, make_model, rollout_model
from scalarspring.physics import PhaseState, SystemParams, hamiltonian_flat
from scalarspring.train import TrainConfig, batch_gradient, loss, train

from conftest import random_state_flat
from test_models import equivariance_violation

ASSETS = pathlib.Path(__file__).resolve().parents[1] / "assets" / "reference"

SEEDS = (0, 1, 2)
SCALAR_KINDS = ("scalars-hnn", "scalars-node")
BASELINE_OF = {"scalars-hnn": "mlp-hnn", "scalars-node": "mlp-node"}

# criterion thresholds, pinned from the acceptance contract
STATE_ERR_LIMIT = {"scalars-hnn": 0.02, "scalars-node": 0.03}
LPERP_CURVE_LIMIT = 1e-2
LPERP_SEPARATION = 5.0
EQUIVARIANCE_TOL = 1e-10
BASELINE_VIOLATION_MIN = 1e-2
CONSERVATION_TOL = 1e-6
RK4_RATIO_RANGE = (12.0, 20.0)
FIRST_ORDER_TOL = 1e-5
END_TO_END_TOL = 1e-4
TRACE_TOL = 1e-8
ENERGY_DRIFT_TOL = 1e-5


def _report(criterion: str, passed: bool, detail: str):
    print(f"[criterion {criterion}] {'PASS' if passed else 'FAIL'}: {detail}")
    assert passed, detail


@pytest.fixture(scope="session")
def default_dataset():
    params = SystemParams()
    records = generate_dataset(params, DatasetConfig(), IntegratorConfig())
    return params, records


@pytest.fixture(scope="session")
def trained_suite(default_dataset):
    """Train every model family on every seed and evaluate 150-step rollouts."""
    params, records = default_dataset
    train_records, test_records = split_records(records)
    test_states = [PhaseState.from_flat(r.states[0]) for r in test_records[:100]]
    runs = {}
    for kind in (*SCALAR_KINDS, *BASELINE_OF.values()):
        for seed in SEEDS:
            model = make_model(kind, init_seed=seed)
            started = time.perf_counter()
            model, history = train(
                model, train_records, TrainConfig(seed=seed), params.qo, params.g
            )
            minutes = (time.perf_counter() - started) / 60.0
            result = evaluate(model, params, test_states, horizon=150)
            runs[(kind, seed)] = {
                "model": model,
                "result": result,
                "minutes": minutes,
                "best_epoch": history.best_epoch,
            }
            print(f"  trained {kind} seed {seed}: {minutes:.1f} min, "
                  f"geo state err {result.mean_geo_state_err:.4f}, "
                  f"geo lperp err {result.mean_geo_lperp_err:.2e}, "
                  f"excluded {result.n_failed}", flush=True)
    _record_results(runs)
    return params, runs, test_states


def _record_results(runs):
    doc = {}
    for (kind, seed), entry in runs.items():
        r = entry["result"]
        doc.setdefault(kind, {})[str(seed)] = {
            "geo_state_err": r.mean_geo_state_err,
            "geo_lperp_err": r.mean_geo_lperp_err,
            "train_minutes": entry["minutes"],
            "excluded_trajectories": r.n_failed,
            "best_epoch": entry["best_epoch"],
        }
    path = ASSETS / "recorded_results.json"
    try:
        path.write_text(json.dumps(doc, indent=1, sort_keys=True))
    except OSError:
        pass


@pytest.mark.slow
def test_criterion_1_table_reproduction(trained_suite):
    params, runs, _ = trained_suite
    lines = []
    ok = True
    for kind in SCALAR_KINDS:
        scalar_errs = np.array(
            [runs[(kind, s)]["result"].mean_geo_state_err for s in SEEDS]
        )
        base_errs = np.array(
            [runs[(BASELINE_OF[kind], s)]["result"].mean_geo_state_err for s in SEEDS]
        )
        mean = scalar_errs.mean()
        ok &= mean <= STATE_ERR_LIMIT[kind]
        ok &= bool(np.all(scalar_errs < base_errs))
        lines.append(
            f"{kind} {mean:.4f}+/-{scalar_errs.std():.4f} "
            f"(limit {STATE_ERR_LIMIT[kind]}) vs {BASELINE_OF[kind]} "
            f"{base_errs.mean():.4f}+/-{base_errs.std():.4f}"
        )
    minutes = max(entry["minutes"] for entry in runs.values())
    lines.append(f"slowest training run {minutes:.1f} min")
    _report("1", ok, "; ".join(lines))


@pytest.mark.slow
def test_criterion_2_conservation_separation(trained_suite):
    params, runs, _ = trained_suite
    curve_max = 0.0
    ratios = []
    for seed in SEEDS:
        hnn = runs[("scalars-hnn", seed)]["result"]
        node = runs[("scalars-node", seed)]["result"]
        curve_max = max(curve_max, float(hnn.step_geo_lperp_err.max()))
        ratios.append(node.mean_geo_lperp_err / hnn.mean_geo_lperp_err)
    ok = curve_max < LPERP_CURVE_LIMIT and min(ratios) >= LPERP_SEPARATION
    _report(
        "2", ok,
        f"scalars-hnn L_perp curve max {curve_max:.2e} (< {LPERP_CURVE_LIMIT}); "
        f"node/hnn geo-mean ratios per seed {[f'{r:.1f}' for r in ratios]} "
        f"(>= {LPERP_SEPARATION})",
    )


def test_criterion_3_equivariance_suite(params):
    rng = np.random.default_rng(100)
    details = []
    ok = True
    for kind in SCALAR_KINDS:
        model = make_model(kind, hidden_dims=(16, 16), init_seed=1)
        model.weights = [w + 0.05 * rng.standard_normal(w.shape) for w in model.weights]
        violation = equivariance_violation(model, params, n_draws=100)
        ok &= violation <= EQUIVARIANCE_TOL
        details.append(f"{kind} {violation:.2e}")
    for kind in BASELINE_OF.values():
        model = make_model(kind, hidden_dims=(16, 16), init_seed=1)
        model.weights = [w + 0.05 * rng.standard_normal(w.shape) for w in model.weights]
        violation = equivariance_violation(model, params, n_draws=100)
        ok &= violation >= BASELINE_VIOLATION_MIN
        details.append(f"{kind} {violation:.2e}")
    _report("3", ok, f"worst relative violations over 100 (R, w) draws: "
                     f"{', '.join(details)} (scalar <= {EQUIVARIANCE_TOL}, "
                     f"baseline >= {BASELINE_VIOLATION_MIN})")


def test_criterion_4_ground_truth_oracles(default_dataset):
    params, records = default_dataset
    assert len(records) == 500 and all(r.states.shape == (6, 12) for r in records)
    energy_worst = 0.0
    lperp_worst = 0.0
    for r in records:
        h = hamiltonian_flat(params, r.states)
        energy_worst = max(energy_worst, np.abs(h - h[0]).max() / max(abs(h[0]), 1e-9))
        lp = angular_momentum_proj_flat(r.states, params.g)
        lperp_worst = max(lperp_worst, np.abs(lp - lp[0]).max() / max(abs(lp[0]), 1e-9))

    def oscillator(z, t):
        return np.array([z[1], -z[0]])

    def end_error(h):
        z = np.array([1.0, 0.0])
        for i in range(round(1.0 / h)):
            z = rk4_step(oscillator, z, i * h, h)
        return abs(z[0] - np.cos(1.0))

    ratio = end_error(0.1) / end_error(0.05)
    ok = (
        energy_worst <= CONSERVATION_TOL
        and lperp_worst <= CONSERVATION_TOL
        and RK4_RATIO_RANGE[0] <= ratio <= RK4_RATIO_RANGE[1]
    )
    _report(
        "4", ok,
        f"worst energy drift {energy_worst:.2e}, worst L_perp drift "
        f"{lperp_worst:.2e} over {len(records)} trajectories "
        f"(<= {CONSERVATION_TOL}); RK4 halving ratio {ratio:.1f} in "
        f"{RK4_RATIO_RANGE}",
    )


def test_criterion_5_gradient_suite(params, default_dataset):
    _, records = default_dataset
    rng = np.random.default_rng(200)

    # first order: energy gradient wrt the state vs central differences
    model = ScalarHnnModel(hidden_dims=(16, 16), init_seed=3)
    model.weights = [w + 0.1 * rng.standard_normal(w.shape) for w in model.weights]
    step = 1e-6
    first_worst = 0.0
    for _ in range(100):
        z = random_state_flat(rng)
        tape = ad.Tape()
        zv = tape.leaf(z[None, :])
        (gz,) = ad.grad(ad.sum_all(model.energy_vars(zv, params.qo, params.g)), [zv])
        fd = np.zeros(12)
        for i in range(12):
            up, dn = z.copy(), z.copy()
            up[i] += step
            dn[i] -= step
            fd[i] = (
                model.energy_array(up[None, :], params.qo, params.g)[0]
                - model.energy_array(dn[None, :], params.qo, params.g)[0]
            ) / (2 * step)
        first_worst = max(
            first_worst, np.linalg.norm(gz[0] - fd) / max(np.linalg.norm(fd), 1e-12)
        )

    # end to end: training gradient through the unrolled solver, 2-record batch
    batch = records[:2]
    config = TrainConfig(substeps_per_label=10)
    end_worst = {}
    for kind in SCALAR_KINDS:
        m = make_model(kind, hidden_dims=(6, 6), init_seed=4)
        # small perturbation keeps the untrained rollout bounded
        m.weights = [w + 0.02 * rng.standard_normal(w.shape) for w in m.weights]
        value, grads, _ = batch_gradient(m, batch, config, params.qo, params.g)
        assert np.isfinite(value)
        flat = np.concatenate([g.reshape(-1) for g in grads])
        sizes = [w.size for w in m.weights]
        coords = rng.choice(sum(sizes), size=20, replace=False)
        h = 1e-5
        fd = np.zeros(len(coords))
        for n, c in enumerate(coords):
            acc = 0
            for wi, sz in enumerate(sizes):
                if c < acc + sz:
                    off = c - acc
                    break
                acc += sz
            flat_w = m.weights[wi].reshape(-1)
            keep = flat_w[off]
            flat_w[off] = keep + h
            up = loss(m, batch, params.qo, params.g, 10)
            flat_w[off] = keep - h
            down = loss(m, batch, params.qo, params.g, 10)
            flat_w[off] = keep
            fd[n] = (up - down) / (2 * h)
        end_worst[kind] = np.linalg.norm(flat[coords] - fd) / max(
            np.linalg.norm(fd), 1e-12
        )
    ok = first_worst <= FIRST_ORDER_TOL and all(
        v <= END_TO_END_TOL for v in end_worst.values()
    )
    _report(
        "5", ok,
        f"dH/dz vs finite differences worst {first_worst:.2e} "
        f"(<= {FIRST_ORDER_TOL}); end-to-end training gradient "
        + ", ".join(f"{k} {v:.2e}" for k, v in end_worst.items())
        + f" (<= {END_TO_END_TOL})",
    )


def _hnn_divergence_trace(model, params, z):
    trace = 0.0
    for i in range(12):
        tape = ad.Tape()
        zv = tape.leaf(z[None, :])
        h = ad.sum_all(model.energy_vars(zv, params.qo, params.g))
        (gz,) = ad.grad(h, [zv], create_graph=True)
        u = np.zeros((1, 12))
        u[0, i] = 1.0
        (hess_col,) = ad.grad(ad.sum_all(ad.mul(gz, u)), [zv])
        jh = np.concatenate([hess_col[0, 6:12], -hess_col[0, 0:6]])
        trace += jh[i]
    return abs(trace)


def test_criterion_6_divergence_free(params):
    rng = np.random.default_rng(300)
    model = ScalarHnnModel(hidden_dims=(16, 16), init_seed=5)
    model.weights = [w + 0.1 * rng.standard_normal(w.shape) for w in model.weights]
    worst = max(
        _hnn_divergence_trace(model, params, random_state_flat(rng)) for _ in range(50)
    )
    _report("6a", worst <= TRACE_TOL,
            f"worst |trace(Jacobian)| over 50 random states {worst:.2e} "
            f"(<= {TRACE_TOL})")


@pytest.mark.slow
def test_criterion_6_learned_energy_drift(trained_suite):
    # conservation up to discretization: the drift check integrates at the
    # ground-truth-grade substep (1e-3 s), where RK4 truncation is below the
    # tolerance; at the 0.01 s training step the solver error alone exceeds it
    params, runs, test_states = trained_suite
    model = runs[("scalars-hnn", 0)]["model"]
    z0 = np.stack([s.to_flat() for s in test_states[:10]])
    times = np.arange(151) * 0.1
    path = rollout_model(model, z0, times, 100, params.qo, params.g)
    drifts = []
    for b in range(z0.shape[0]):
        h = model.energy_array(path[b], params.qo, params.g)
        drifts.append(np.abs(h - h[0]).max() / max(abs(h[0]), 1e-9))
    worst = max(drifts)
    _report("6b", worst <= ENERGY_DRIFT_TOL,
            f"learned-energy relative drift over 150 steps, worst of 10 "
            f"trajectories {worst:.2e} (<= {ENERGY_DRIFT_TOL})")


def test_criterion_7_determinism(tmp_path, params):
    config = DatasetConfig(n_trajectories=6, n_labels=3, seed=17)
    integ = IntegratorConfig()
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_dataset(generate_dataset(params, config, integ), params, config, integ, str(a))
    save_dataset(generate_dataset(params, config, integ), params, config, integ, str(b))
    generate_ok = a.read_bytes() == b.read_bytes()

    records = generate_dataset(params, config, integ)
    weights = []
    for _ in range(2):
        model = make_model("scalars-hnn", hidden_dims=(6, 6), init_seed=6)
        model, _ = train(
            model, records, TrainConfig(epochs=2, batch_size=3, seed=1),
            params.qo, params.g,
        )
        weights.append(model.weights)
    train_ok = all(np.array_equal(x, y) for x, y in zip(*weights))

    states = [PhaseState.from_flat(r.states[0]) for r in records[:3]]
    e1 = evaluate(model, params, states, horizon=5)
    e2 = evaluate(model, params, states, horizon=5)
    eval_ok = (
        e1.mean_geo_state_err == e2.mean_geo_state_err
        and np.array_equal(e1.step_geo_lperp_err, e2.step_geo_lperp_err)
    )
    _report("7a", generate_ok and train_ok and eval_ok,
            f"byte-identical datasets {generate_ok}, bit-identical training "
            f"{train_ok}, bit-identical evaluation {eval_ok}")


def test_criterion_7_golden_file(tmp_path):
    config = ASSETS / "config.json"
    golden = ASSETS / "eval_summary.json"
    checkpoint = ASSETS / "checkpoint.json"
    if not (config.exists() and golden.exists() and checkpoint.exists()):
        pytest.fail("reference artifacts missing from assets/reference")
    dataset = tmp_path / "dataset.json"
    assert cli_main(["generate", "--config", str(config), "--out", str(dataset)]) == 0
    assert cli_main([
        "eval", "--config", str(config), "--dataset", str(dataset),
        str(checkpoint), "--out", str(tmp_path),
    ]) == 0
    produced = (tmp_path / "eval_summary.json").read_bytes()
    _report("7b", produced == golden.read_bytes(),
            "shipped reference checkpoint reproduces the recorded evaluation "
            "summary bit-exactly")
