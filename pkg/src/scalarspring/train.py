"""Training: squared rollout error minimized with Adam through the unrolled solver.

The loss for a batch of records rolls the model's dynamics out from each
initial state across the record's label times and sums squared state errors
over every label.  Gradients come from one reverse sweep through the whole
unrolled RK4 computation (discretize-then-optimize), so they are exact for
the discrete objective.  For Hamiltonian models the dynamics itself is a
recorded gradient, and the sweep differentiates through it.

The last `holdout_fraction` of the training records never receives gradient
updates; the returned parameters are the ones with the best held-out loss.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .integrate import rollout
from .models import rollout_model


class NonFiniteLossError(RuntimeError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(
            f"non-finite training loss {value} at epoch {epoch}, batch {batch}"
        )
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 500
    batch_size: int = 100
    optimizer: str = "Adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    substeps_per_label: int = 10
    holdout_fraction: float = 0.1

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.optimizer != "Adam":
            raise ValueError("only the Adam optimizer is supported")
        if self.substeps_per_label < 1:
            raise ValueError("substeps_per_label must be >= 1")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must be in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer,
            "seed": self.seed,
            "substeps_per_label": self.substeps_per_label,
        }


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    holdout_loss: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    kink_hits: list = field(default_factory=list)
    best_epoch: int = -1

    def append(self, train_loss, holdout_loss, seconds, kink_hits):
        self.train_loss.append(float(train_loss))
        self.holdout_loss.append(float(holdout_loss))
        self.seconds.append(float(seconds))
        self.kink_hits.append(int(kink_hits))

    def __len__(self):
        return len(self.train_loss)

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "holdout_loss", "seconds", "kink_hits"])
            for i in range(len(self.train_loss)):
                writer.writerow(
                    [i, repr(self.train_loss[i]), repr(self.holdout_loss[i]),
                     repr(self.seconds[i]), self.kink_hits[i]]
                )


def _batch_arrays(records):
    """Stack a batch that shares one label grid into (B, 12) and (B, T+1, 12)."""
    times = records[0].times
    for r in records[1:]:
        if not np.array_equal(r.times, times):
            raise ValueError("records in one batch must share label times")
    cube = np.stack([r.states for r in records])
    return times, cube[:, 0, :], cube


def loss(model, records, qo, g, substeps_per_label: int = 10) -> float:
    """Summed squared rollout error over all labels of all records."""
    times, z0, cube = _batch_arrays(records)
    pred = rollout_model(model, z0, times, substeps_per_label, qo, g)
    diff = pred[:, 1:, :] - cube[:, 1:, :]  # label 0 matches by construction
    return float((diff * diff).sum())


def _loss_var(model, weight_vars, tape, z0, cube, times, substeps, qo, g):
    zv = tape.constant(z0)
    dynamics = model.bind(tape, z0.shape[0], qo, g, weight_vars=weight_vars,
                          create_graph=model.needs_create_graph)
    states = rollout(lambda z, t: dynamics(z), zv, times, substeps)
    total = None
    for j in range(1, len(times)):
        err = ad.sub(states[j], cube[:, j, :])
        term = ad.sum_all(ad.mul(err, err))
        total = term if total is None else ad.add(total, term)
    return total


def batch_gradient(model, records, config: TrainConfig, qo, g):
    """(loss value, parameter gradients, kink hits) for one batch of records."""
    times, z0, cube = _batch_arrays(records)
    tape = ad.Tape()
    weight_vars = model.weight_vars(tape)
    total = _loss_var(model, weight_vars, tape, z0, cube, times,
                      config.substeps_per_label, qo, g)
    grads = ad.grad(total, weight_vars)
    return float(total.value), grads, tape.kink_hits


def adam_step(params, grads, moments, t: int, config: TrainConfig):
    """Bias-corrected Adam update at step t >= 1; returns (params, moments)."""
    m, v = moments
    lr, b1, b2, eps = config.learning_rate, config.beta1, config.beta2, config.eps
    new_params, new_m, new_v = [], [], []
    for p, gr, mi, vi in zip(params, grads, m, v):
        mi = b1 * mi + (1.0 - b1) * gr
        vi = b2 * vi + (1.0 - b2) * gr * gr
        mhat = mi / (1.0 - b1 ** t)
        vhat = vi / (1.0 - b2 ** t)
        new_params.append(p - lr * mhat / (np.sqrt(vhat) + eps))
        new_m.append(mi)
        new_v.append(vi)
    return new_params, (new_m, new_v)


def init_moments(params):
    return ([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def train(model, records, config: TrainConfig, qo, g):
    """Minibatch Adam on the rollout loss; returns (model, history).

    The model's weights are left at the best held-out-loss parameters.  Fully
    deterministic given (seed, records, config).
    """
    n_holdout = int(round(len(records) * config.holdout_fraction))
    if n_holdout > 0:
        fit_records = records[:-n_holdout]
        holdout_records = records[-n_holdout:]
    else:
        fit_records = list(records)
        holdout_records = []
    if not fit_records:
        raise ValueError("no records left to fit after holdout split")

    rng = np.random.default_rng(config.seed)
    params = [w.copy() for w in model.weights]
    moments = init_moments(params)
    history = TrainHistory()
    best = (np.inf, [w.copy() for w in params], -1)
    step = 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(fit_records))
        epoch_loss = 0.0
        epoch_kinks = 0
        for batch_index, start in enumerate(range(0, len(order), config.batch_size)):
            batch = [fit_records[i] for i in order[start : start + config.batch_size]]
            model.weights = params
            value, grads, kinks = batch_gradient(model, batch, config, qo, g)
            if not np.isfinite(value):
                raise NonFiniteLossError(epoch, batch_index, value)
            epoch_loss += value
            epoch_kinks += kinks
            step += 1
            params, moments = adam_step(params, grads, moments, step, config)
        model.weights = params
        if holdout_records:
            held = loss(model, holdout_records, qo, g, config.substeps_per_label)
        else:
            held = epoch_loss
        if held < best[0]:
            best = (held, [w.copy() for w in params], epoch)
        history.append(epoch_loss, held, time.perf_counter() - t0, epoch_kinks)
    history.best_epoch = best[2]
    model.weights = best[1]
    return model, history
