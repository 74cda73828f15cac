"""Learnable dynamics models.

Three families share one MLP core:

* ``scalars-node``: an MLP over the invariant features emits one coefficient
  per (tangent slot, edge) pair, and each tangent slot is the corresponding
  linear combination of the six edge vectors.  Rotation/reflection/translation
  equivariance holds for arbitrary weights, because the coefficients only see
  inner products and the combined vectors transform with the state.
* ``scalars-hnn``: an MLP over the same features is a learned scalar energy;
  the dynamics is its symplectic gradient (dq/dt, dp/dt) = (dH/dp, -dH/dq),
  obtained from a recorded reverse sweep so training can differentiate it.
* ``mlp-node`` / ``mlp-hnn``: the no-symmetry baselines, consuming the raw
  18-dimensional concatenation (q1, q2, p1, p2, qo, g) so they see exactly
  the same information as the scalar models.

The N-ODE head uses four independent coefficient groups of six (one group per
tangent slot dq1, dq2, dp1, dp2), so the MLP output dimension is 24.

Models are bound to a tape once per rollout (`bind`), which records weights
and constants a single time and returns the dynamics closure used by the
integrator.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import scalars
from .integrate import rollout
from .physics import PhaseState

ACTIVATIONS = ("tanh", "swish")
MODEL_KINDS = ("scalars-node", "scalars-hnn", "mlp-node", "mlp-hnn")

N_COEFF_GROUPS = 4  # tangent slots: dq1, dq2, dp1, dp2
BASELINE_INPUT_DIM = 18  # q1, q2, p1, p2, qo, g
CHECKPOINT_SCHEMA_VERSION = 1


class ModelSpecError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: tuple
    output_dim: int
    activation: str = "swish"
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(d < 1 for d in dims):
            raise ModelSpecError("all layer dimensions must be positive")
        if self.activation not in ACTIVATIONS:
            raise ModelSpecError(f"activation must be one of {ACTIVATIONS}")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "output_dim": self.output_dim,
            "activation": self.activation,
            "init_seed": self.init_seed,
        }


def init_mlp(spec: MlpSpec) -> list:
    """Seeded Glorot-uniform weights and zero biases, [W0, b0, W1, b1, ...].

    The output layer starts at exactly zero so a freshly initialized model is
    the identity flow (zero tangent).  The raw feature scale spans two orders
    of magnitude, and a Glorot-scaled output layer would make initial rollouts
    blow up within the training horizon.
    """
    rng = np.random.default_rng(spec.init_seed)
    dims = (spec.input_dim, *spec.hidden_dims, spec.output_dim)
    weights = []
    last = len(dims) - 2
    for layer, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        if layer == last:
            weights.append(np.zeros((fan_in, fan_out)))
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        weights.append(np.zeros(fan_out))
    return weights


def mlp_apply(x: ad.Var, weights, activation: str) -> ad.Var:
    """Forward pass through the recorded MLP; weights are Vars on x's tape."""
    h = x
    n_layers = len(weights) // 2
    for layer in range(n_layers):
        h = ad.affine(h, weights[2 * layer], weights[2 * layer + 1])
        if layer < n_layers - 1:
            if activation == "tanh":
                h = ad.tanh(h)
            else:  # swish
                h = ad.mul(h, ad.sigmoid(h))
    return h


def _g_rows(tape: ad.Tape, g, batch: int) -> ad.Var:
    return tape.constant(np.broadcast_to(np.asarray(g, dtype=np.float64), (batch, 3)))


class DynamicsModel:
    """Shared surface of the model families: parameters plus a dynamics map."""

    kind: str = ""
    needs_create_graph: bool = False

    def __init__(self):
        self.spec: MlpSpec
        self.weights: list
        self.transforms: tuple = ()

    def weight_vars(self, tape: ad.Tape) -> list:
        """Record the parameters as leaves on a tape (the trainable view)."""
        return [tape.leaf(w) for w in self.weights]

    def bind(self, tape: ad.Tape, batch: int, qo, g, weight_vars=None,
             create_graph=False):
        """Record constants/weights once and return the dynamics closure."""
        raise NotImplementedError

    def dynamics_vars(self, z: ad.Var, qo, g, weight_vars=None, create_graph=False) -> ad.Var:
        f = self.bind(z.tape, z.value.shape[0], qo, g, weight_vars, create_graph)
        return f(z)

    def dynamics_array(self, z: np.ndarray, qo, g) -> np.ndarray:
        """Batched numpy evaluation (B, 12) -> (B, 12); no graph survives."""
        tape = ad.Tape()
        zv = tape.constant(np.asarray(z, dtype=np.float64))
        return self.dynamics_vars(zv, qo, g).value

    def dynamics(self, state: PhaseState, qo, g) -> PhaseState:
        """Single-state tangent, in the same PhaseState layout."""
        out = self.dynamics_array(state.to_flat()[None, :], qo, g)
        return PhaseState.from_flat(out[0])

    def _constant_weights(self, tape: ad.Tape) -> list:
        return [tape.constant(w) for w in self.weights]


def _symplectic_tangent(tape: ad.Tape, z: ad.Var, h_sum: ad.Var, create_graph: bool) -> ad.Var:
    """(dH/dp, -dH/dq) from a recorded scalar energy summed over the batch."""
    (gz,) = ad.grad(h_sum, [z], create_graph=create_graph)
    if not create_graph:
        # value-only path: correct numbers, not differentiable further
        gz = tape.constant(gz)
    return ad.hstack([ad.cols(gz, 6, 12), ad.neg(ad.cols(gz, 0, 6))])


class ScalarNodeModel(DynamicsModel):
    """Equivariant neural ODE: invariant coefficients times the edge vectors."""

    kind = "scalars-node"

    def __init__(self, hidden_dims=(128, 128), activation="swish", init_seed=0,
                 transforms=scalars.DEFAULT_TRANSFORMS):
        self.transforms = scalars._check_transforms(transforms)
        in_dim = scalars.feature_length(self.transforms)
        self.spec = MlpSpec(in_dim, tuple(hidden_dims), scalars.N_EDGES * N_COEFF_GROUPS,
                            activation, init_seed)
        self.weights = init_mlp(self.spec)

    def bind(self, tape, batch, qo, g, weight_vars=None, create_graph=False):
        wv = weight_vars if weight_vars is not None else self._constant_weights(tape)
        grows = _g_rows(tape, g, batch)

        def dynamics(z: ad.Var) -> ad.Var:
            edges = scalars.edge_matrix(z, qo, grows)
            feats = scalars.feature_vars(edges, self.transforms)
            coeffs = mlp_apply(feats, wv, self.spec.activation)
            # rows of coeffs as (4, 6) times rows of edges as (6, 3)
            return ad.bmm(coeffs, edges, (N_COEFF_GROUPS, scalars.N_EDGES, 3))

        return dynamics


class ScalarHnnModel(DynamicsModel):
    """Equivariant Hamiltonian network: learned invariant energy, symplectic flow."""

    kind = "scalars-hnn"
    needs_create_graph = True

    def __init__(self, hidden_dims=(128, 128), activation="swish", init_seed=0,
                 transforms=scalars.DEFAULT_TRANSFORMS):
        self.transforms = scalars._check_transforms(transforms)
        in_dim = scalars.feature_length(self.transforms)
        self.spec = MlpSpec(in_dim, tuple(hidden_dims), 1, activation, init_seed)
        self.weights = init_mlp(self.spec)

    def energy_vars(self, z: ad.Var, qo, g, weight_vars=None) -> ad.Var:
        """Learned energy for a batch, shape (B, 1)."""
        wv = weight_vars if weight_vars is not None else self._constant_weights(z.tape)
        grows = _g_rows(z.tape, g, z.value.shape[0])
        edges = scalars.edge_matrix(z, qo, grows)
        feats = scalars.feature_vars(edges, self.transforms)
        return mlp_apply(feats, wv, self.spec.activation)

    def energy_array(self, z: np.ndarray, qo, g) -> np.ndarray:
        tape = ad.Tape()
        zv = tape.constant(np.asarray(z, dtype=np.float64))
        return self.energy_vars(zv, qo, g).value[:, 0]

    def bind(self, tape, batch, qo, g, weight_vars=None, create_graph=False):
        wv = weight_vars if weight_vars is not None else self._constant_weights(tape)
        grows = _g_rows(tape, g, batch)

        def dynamics(z: ad.Var) -> ad.Var:
            edges = scalars.edge_matrix(z, qo, grows)
            feats = scalars.feature_vars(edges, self.transforms)
            energy = mlp_apply(feats, wv, self.spec.activation)
            # summing over the batch before the sweep gives every per-row
            # gradient at once, since rows are independent
            return _symplectic_tangent(tape, z, ad.sum_all(energy), create_graph)

        return dynamics


class BaselineMlpModel(DynamicsModel):
    """No-symmetry baseline on the raw (q1, q2, p1, p2, qo, g) concatenation."""

    def __init__(self, form: str, hidden_dims=(128, 128), activation="swish", init_seed=0):
        if form not in ("node", "hnn"):
            raise ModelSpecError("baseline form must be 'node' or 'hnn'")
        self.form = form
        self.kind = f"mlp-{form}"
        self.needs_create_graph = form == "hnn"
        self.transforms = ()
        out_dim = 12 if form == "node" else 1
        self.spec = MlpSpec(BASELINE_INPUT_DIM, tuple(hidden_dims), out_dim,
                            activation, init_seed)
        self.weights = init_mlp(self.spec)

    def bind(self, tape, batch, qo, g, weight_vars=None, create_graph=False):
        wv = weight_vars if weight_vars is not None else self._constant_weights(tape)
        qo_rows = tape.constant(
            np.broadcast_to(np.asarray(qo, dtype=np.float64), (batch, 3))
        )
        grows = _g_rows(tape, g, batch)

        def dynamics(z: ad.Var) -> ad.Var:
            out = mlp_apply(ad.hstack([z, qo_rows, grows]), wv, self.spec.activation)
            if self.form == "node":
                return out
            return _symplectic_tangent(tape, z, ad.sum_all(out), create_graph)

        return dynamics


def make_model(kind: str, hidden_dims=(128, 128), activation="swish", init_seed=0,
               transforms=scalars.DEFAULT_TRANSFORMS) -> DynamicsModel:
    if kind == "scalars-node":
        return ScalarNodeModel(hidden_dims, activation, init_seed, transforms)
    if kind == "scalars-hnn":
        return ScalarHnnModel(hidden_dims, activation, init_seed, transforms)
    if kind == "mlp-node":
        return BaselineMlpModel("node", hidden_dims, activation, init_seed)
    if kind == "mlp-hnn":
        return BaselineMlpModel("hnn", hidden_dims, activation, init_seed)
    raise ModelSpecError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def rollout_model(model: DynamicsModel, z0: np.ndarray, times, substeps: int,
                  qo, g) -> np.ndarray:
    """Value-only model rollout, (B, 12) initial states -> (B, T+1, 12).

    Each label interval runs on its own short tape, so arbitrarily long
    rollouts use bounded memory.
    """
    z = np.asarray(z0, dtype=np.float64)
    out = [z]
    times = [float(t) for t in times]
    for t_prev, t_next in zip(times, times[1:]):
        tape = ad.Tape()
        f = model.bind(tape, z.shape[0], qo, g)
        zv = tape.constant(z)
        z = rollout(lambda zz, tt: f(zz), zv, [t_prev, t_next], substeps)[-1].value
        out.append(z)
    return np.stack(out, axis=1)


def atomic_write_text(path: str, text: str) -> None:
    """Write-then-rename so an interrupted run never leaves a partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(model: DynamicsModel, path: str, extra: dict | None = None) -> None:
    """Checkpoint to a self-describing JSON file; floats round-trip exactly."""
    doc = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "kind": model.kind,
        "mlp_spec": model.spec.to_dict(),
        "feature_version": scalars.FEATURE_VERSION,
        "transforms": list(model.transforms),
        "params": [w.tolist() for w in model.weights],
    }
    if extra:
        doc["extra"] = extra
    atomic_write_text(path, json.dumps(doc, indent=1))


def load_model(path: str) -> DynamicsModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointError(
            f"checkpoint schema version {doc.get('schema_version')} != "
            f"supported {CHECKPOINT_SCHEMA_VERSION}"
        )
    if doc.get("feature_version") != scalars.FEATURE_VERSION:
        raise CheckpointError(
            f"checkpoint feature ordering version {doc.get('feature_version')} != "
            f"current {scalars.FEATURE_VERSION}"
        )
    kind = doc.get("kind")
    spec = doc["mlp_spec"]
    model = make_model(
        kind,
        hidden_dims=tuple(spec["hidden_dims"]),
        activation=spec["activation"],
        init_seed=spec["init_seed"],
        transforms=tuple(doc["transforms"]) or scalars.DEFAULT_TRANSFORMS,
    )
    params = [np.asarray(p, dtype=np.float64) for p in doc["params"]]
    expected = [w.shape for w in model.weights]
    got = [p.shape for p in params]
    if expected != got:
        raise CheckpointError(f"parameter shapes {got} do not match spec {expected}")
    model.weights = params
    return model


def checkpoint_extra(path: str) -> dict:
    """Provenance block stored alongside the parameters, if any."""
    with open(path) as fh:
        return json.load(fh).get("extra", {})
