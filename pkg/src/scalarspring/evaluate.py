"""Long-rollout evaluation: state relative error and angular-momentum drift.

For each test initial condition the model is rolled out over the evaluation
horizon and compared step by step against a freshly integrated ground-truth
trajectory.  Two quantities are tracked:

* the bounded state relative error |zhat - z| / (|zhat| + |z|) per step, and
* the drift of the gravity-aligned angular momentum component relative to its
  initial value (absolute drift when the initial value is below 1e-9).

Per-trajectory summaries use the geometric mean over steps 1..T; step 0 is
excluded because its error is identically zero, and entries are floored at
1e-12 before taking logs so exact zeros stay finite.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .integrate import rollout, substeps_for
from .models import rollout_model
from .physics import PhaseState, SystemParams, dynamics_flat

GEO_MEAN_FLOOR = 1e-12
LPERP_ABS_GUARD = 1e-9


def angular_momentum_proj_flat(z: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Gravity-aligned angular momentum component for flat states (..., 12)."""
    g = np.asarray(g, dtype=np.float64)
    gnorm = np.linalg.norm(g)
    if gnorm == 0.0:
        raise ValueError("gravity vector must be nonzero")
    z = np.asarray(z, dtype=np.float64)
    lvec = np.cross(z[..., 0:3], z[..., 6:9]) + np.cross(z[..., 3:6], z[..., 9:12])
    return lvec @ (g / gnorm)


def angular_momentum_proj(state: PhaseState, g: np.ndarray) -> float:
    return float(angular_momentum_proj_flat(state.to_flat(), g))


def state_rel_err_flat(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """|zhat - z| / (|zhat| + |z|) over the flat 12-vector; 0 when both are zero."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    num = np.linalg.norm(pred - truth, axis=-1)
    den = np.linalg.norm(pred, axis=-1) + np.linalg.norm(truth, axis=-1)
    return np.where(den == 0.0, 0.0, num / np.where(den == 0.0, 1.0, den))


def state_rel_err(pred: PhaseState, truth: PhaseState) -> float:
    return float(state_rel_err_flat(pred.to_flat(), truth.to_flat()))


def geometric_mean(errors, floor: float = GEO_MEAN_FLOOR) -> float:
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("geometric mean of an empty sequence")
    if np.any(errors < 0.0):
        raise ValueError("errors must be nonnegative")
    return float(np.exp(np.log(np.maximum(errors, floor)).mean()))


@dataclass(frozen=True)
class RolloutMetrics:
    """Per-step errors of one trajectory plus their geometric means."""

    times: np.ndarray
    state_rel_err: np.ndarray
    lperp_rel_err: np.ndarray
    geo_mean_state_err: float
    geo_mean_lperp_err: float


@dataclass
class EvalResult:
    """Evaluation of one model checkpoint on one test set."""

    times: np.ndarray
    per_trajectory: list
    mean_geo_state_err: float
    std_geo_state_err: float
    mean_geo_lperp_err: float
    std_geo_lperp_err: float
    pooled_geo_state_err: float
    pooled_geo_lperp_err: float
    # per-step geometric means across trajectories (plot-ready)
    step_geo_state_err: np.ndarray = field(default=None)
    step_geo_lperp_err: np.ndarray = field(default=None)
    # trajectories whose model rollout left the finite range, excluded above
    n_failed: int = 0


def evaluate(model, params: SystemParams, initial_states, horizon: int = 150,
             label_spacing: float = 0.1, substeps_per_label: int = 10,
             gt_step: float = 1e-3) -> EvalResult:
    """Roll the model and the exact system from each initial state and compare."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    times = np.arange(horizon + 1) * label_spacing
    z0 = np.stack(
        [s.to_flat() if isinstance(s, PhaseState) else np.asarray(s, dtype=np.float64)
         for s in initial_states]
    )

    def truth_field(z, t):
        return dynamics_flat(params, z)

    gt_states = rollout(truth_field, z0, times, substeps_for(label_spacing, gt_step))
    truth = np.stack(gt_states, axis=1)  # (B, T+1, 12)

    # diverging rollouts may overflow; rows stay independent, and non-finite
    # trajectories are excluded below with a reported count
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        preds = rollout_model(model, z0, times, substeps_per_label, params.qo, params.g)

        finite = np.isfinite(preds).all(axis=(1, 2))
        n_failed = int((~finite).sum())
        if n_failed:
            preds = preds[finite]
            truth = truth[finite]
            z0 = z0[finite]
        if z0.shape[0] == 0:
            raise ValueError("no finite model rollouts; every trajectory diverged")

        state_errs = state_rel_err_flat(preds, truth)  # (B, T+1)

        lperp = angular_momentum_proj_flat(preds, params.g)  # (B, T+1)
    l0 = lperp[:, :1]
    den = np.where(np.abs(l0) < LPERP_ABS_GUARD, 1.0, np.abs(l0))
    lperp_errs = np.abs(lperp - l0) / den

    per_traj = []
    for b in range(z0.shape[0]):
        per_traj.append(
            RolloutMetrics(
                times=times,
                state_rel_err=state_errs[b],
                lperp_rel_err=lperp_errs[b],
                geo_mean_state_err=geometric_mean(state_errs[b, 1:]),
                geo_mean_lperp_err=geometric_mean(lperp_errs[b, 1:]),
            )
        )
    geo_state = np.array([m.geo_mean_state_err for m in per_traj])
    geo_lperp = np.array([m.geo_mean_lperp_err for m in per_traj])
    floored = np.maximum(state_errs[:, 1:], GEO_MEAN_FLOOR)
    floored_l = np.maximum(lperp_errs[:, 1:], GEO_MEAN_FLOOR)
    return EvalResult(
        times=times,
        per_trajectory=per_traj,
        mean_geo_state_err=float(geo_state.mean()),
        std_geo_state_err=float(geo_state.std()),
        mean_geo_lperp_err=float(geo_lperp.mean()),
        std_geo_lperp_err=float(geo_lperp.std()),
        pooled_geo_state_err=geometric_mean(state_errs[:, 1:].reshape(-1)),
        pooled_geo_lperp_err=geometric_mean(lperp_errs[:, 1:].reshape(-1)),
        step_geo_state_err=np.exp(np.log(floored).mean(axis=0)),
        step_geo_lperp_err=np.exp(np.log(floored_l).mean(axis=0)),
        n_failed=n_failed,
    )


def summarize(results_by_kind: dict) -> dict:
    """Aggregate {model kind: [EvalResult per seed]} into a summary document.

    Reports both aggregations: per-trajectory geometric means averaged within
    each seed then mean +/- std across seeds (the headline numbers), and the
    pooled geometric mean over all steps and trajectories.
    """
    summary = {}
    for kind, results in results_by_kind.items():
        state_means = np.array([r.mean_geo_state_err for r in results])
        lperp_means = np.array([r.mean_geo_lperp_err for r in results])
        summary[kind] = {
            "n_seeds": len(results),
            "failed_trajectories": [r.n_failed for r in results],
            "state_rel_err": {
                "per_seed": state_means.tolist(),
                "mean": float(state_means.mean()),
                "std": float(state_means.std()),
                "pooled_geomean": float(
                    np.exp(np.mean([np.log(r.pooled_geo_state_err) for r in results]))
                ),
            },
            "lperp_rel_err": {
                "per_seed": lperp_means.tolist(),
                "mean": float(lperp_means.mean()),
                "std": float(lperp_means.std()),
                "pooled_geomean": float(
                    np.exp(np.mean([np.log(r.pooled_geo_lperp_err) for r in results]))
                ),
            },
        }
    return summary


def write_summary_json(path: str, summary: dict, provenance: dict | None = None) -> None:
    doc = {"summary": summary}
    if provenance:
        doc["provenance"] = provenance
    from .models import atomic_write_text

    atomic_write_text(path, json.dumps(doc, indent=1, sort_keys=True))


def write_per_step_csv(path: str, results: list) -> None:
    """Per-step CSV (t, state_rel_err, L_perp_rel_err), averaged across seeds.

    Per-step values are geometric means across trajectories (and seeds when
    several results are given).
    """
    times = results[0].times
    state = np.exp(np.mean([np.log(r.step_geo_state_err) for r in results], axis=0))
    lperp = np.exp(np.mean([np.log(r.step_geo_lperp_err) for r in results], axis=0))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "state_rel_err", "L_perp_rel_err"])
        for j in range(1, len(times)):
            writer.writerow([repr(float(times[j])), repr(float(state[j - 1])),
                             repr(float(lperp[j - 1]))])
