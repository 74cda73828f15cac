"""Supervised trajectory dataset: sampling, ground-truth integration, persistence.

Each record is one initial condition plus its labeled states at uniformly
spaced later times, all integrated from the exact vector field.  Generation
is a pure function of (system params, dataset config, integrator config):
per-trajectory RNG streams are derived from (seed, trajectory_id), so the
same inputs always produce the same file, byte for byte.

The file format is one self-describing JSON document: a header with the
schema version, provenance (params and configs) and a SHA-256 checksum of the
canonically encoded trajectory payload, then one flat numeric array per
trajectory.  JSON floats use Python's shortest round-trip representation, so
every value survives save/load bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .integrate import IntegratorConfig, rollout, substeps_for
from .models import atomic_write_text
from .physics import (
    CoincidentPointError,
    PhaseState,
    SystemParams,
    dynamics_flat,
    equilibrium_state,
)

DATASET_SCHEMA_VERSION = 1
TRAIN_FRACTION = 0.8
_MAX_RESAMPLE_ATTEMPTS = 100


class DatasetError(RuntimeError):
    pass


class DatasetFormatError(ValueError):
    pass


class DatasetChecksumError(DatasetFormatError):
    pass


class DatasetVersionError(DatasetFormatError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    n_trajectories: int = 500
    n_labels: int = 5
    label_spacing: float = 0.1
    seed: int = 0
    init_position_spread: float = 0.5
    init_momentum_spread: float = 1.0

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if self.n_labels < 1:
            raise ValueError("n_labels must be >= 1")
        if not self.label_spacing > 0.0:
            raise ValueError("label_spacing must be positive")
        if self.init_position_spread < 0.0 or self.init_momentum_spread < 0.0:
            raise ValueError("spreads must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "n_trajectories": self.n_trajectories,
            "n_labels": self.n_labels,
            "label_spacing": self.label_spacing,
            "seed": self.seed,
            "init_position_spread": self.init_position_spread,
            "init_momentum_spread": self.init_momentum_spread,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        return cls(**d)

    def times(self) -> np.ndarray:
        return np.arange(self.n_labels + 1) * self.label_spacing


@dataclass(frozen=True)
class TrajectoryRecord:
    """times (T+1,) starting at 0 and the matching flat states (T+1, 12)."""

    trajectory_id: int
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        states = np.asarray(self.states, dtype=np.float64)
        if times.ndim != 1 or states.shape != (times.shape[0], 12):
            raise ValueError("states must be (len(times), 12)")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0.0):
            raise ValueError("times must be strictly increasing from 0")
        if not np.isfinite(states).all():
            raise ValueError("states must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def state(self, j: int) -> PhaseState:
        return PhaseState.from_flat(self.states[j])

    @property
    def n_labels(self) -> int:
        return len(self.times) - 1


def sample_initial_state(rng: np.random.Generator, params: SystemParams,
                         config: DatasetConfig) -> PhaseState:
    """Gaussian jitter around static equilibrium; resamples degenerate draws.

    Draw order is fixed (q1, q2, p1, p2, three components each) so a given
    generator state always yields the same sample.
    """
    eq = equilibrium_state(params)
    for _ in range(_MAX_RESAMPLE_ATTEMPTS):
        q1 = eq.q1 + config.init_position_spread * rng.standard_normal(3)
        q2 = eq.q2 + config.init_position_spread * rng.standard_normal(3)
        p1 = config.init_momentum_spread * rng.standard_normal(3)
        p2 = config.init_momentum_spread * rng.standard_normal(3)
        if np.linalg.norm(q1 - params.qo) > 0.0 and np.linalg.norm(q2 - q1) > 0.0:
            return PhaseState(q1=q1, q2=q2, p1=p1, p2=p2)
    raise DatasetError(
        f"no valid initial state after {_MAX_RESAMPLE_ATTEMPTS} attempts"
    )


def _trajectory_rng(seed: int, trajectory_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, trajectory_id])


def generate_dataset(params: SystemParams, config: DatasetConfig,
                     integ: IntegratorConfig) -> list:
    """Integrate config.n_trajectories records of the exact dynamics."""
    times = config.times()
    substeps = substeps_for(config.label_spacing, integ.step)
    z0 = np.stack(
        [
            sample_initial_state(_trajectory_rng(config.seed, i), params, config).to_flat()
            for i in range(config.n_trajectories)
        ]
    )

    def field(z, t):
        return dynamics_flat(params, z)

    try:
        states = rollout(field, z0, times, substeps)
    except CoincidentPointError:
        # replay one-by-one to name the offender
        for i in range(config.n_trajectories):
            try:
                rollout(field, z0[i], times, substeps)
            except CoincidentPointError as exc:
                raise DatasetError(f"trajectory {i}: {exc}") from exc
        raise
    cube = np.stack(states, axis=1)  # (N, T+1, 12)
    return [TrajectoryRecord(i, times, cube[i]) for i in range(config.n_trajectories)]


def split_records(records) -> tuple[list, list]:
    """Deterministic train/test split: first 80% of ids train, rest test."""
    n_train = int(len(records) * TRAIN_FRACTION)
    return list(records[:n_train]), list(records[n_train:])


def _payload(records) -> list:
    return [
        {
            "trajectory_id": r.trajectory_id,
            "times": r.times.tolist(),
            "states_flat": r.states.reshape(-1).tolist(),
        }
        for r in records
    ]


def _canonical(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _checksum(payload) -> str:
    return hashlib.sha256(_canonical(payload).encode()).hexdigest()


def save_dataset(records, params: SystemParams, config: DatasetConfig,
                 integ: IntegratorConfig, path: str) -> None:
    payload = _payload(records)
    doc = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "params": params.to_dict(),
        "config": config.to_dict(),
        "integrator": {
            "method": integ.method,
            "step": integ.step,
            "substeps_per_label": integ.substeps_per_label,
        },
        "checksum": _checksum(payload),
        "trajectories": payload,
    }
    atomic_write_text(path, json.dumps(doc))


@dataclass(frozen=True)
class DatasetFile:
    records: list
    params: SystemParams
    config: DatasetConfig
    integrator: IntegratorConfig
    checksum: str


def load_dataset(path: str) -> DatasetFile:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"cannot parse dataset file {path}: {exc}") from exc
    version = doc.get("schema_version")
    if version != DATASET_SCHEMA_VERSION:
        raise DatasetVersionError(
            f"dataset schema version {version} != supported {DATASET_SCHEMA_VERSION}"
        )
    payload = doc.get("trajectories")
    if payload is None or "checksum" not in doc:
        raise DatasetFormatError("dataset file is missing trajectories or checksum")
    actual = _checksum(payload)
    if actual != doc["checksum"]:
        raise DatasetChecksumError(
            f"dataset checksum mismatch: header {doc['checksum']}, payload {actual}"
        )
    records = []
    for item in payload:
        times = np.asarray(item["times"])
        states = np.asarray(item["states_flat"]).reshape(len(times), 12)
        records.append(TrajectoryRecord(item["trajectory_id"], times, states))
    integ = doc.get("integrator", {})
    return DatasetFile(
        records=records,
        params=SystemParams.from_dict(doc["params"]),
        config=DatasetConfig.from_dict(doc["config"]),
        integrator=IntegratorConfig(**integ),
        checksum=doc["checksum"],
    )
