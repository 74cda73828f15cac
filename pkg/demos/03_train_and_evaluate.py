"""Train a small equivariant model and score a long rollout.

A scaled-down version of the full experiment (fewer trajectories, a smaller
network, a shorter horizon) that runs in about a minute: generate ground
truth, train a scalar-feature Hamiltonian model on short rollouts, then
evaluate trajectory accuracy and angular-momentum conservation well beyond
the training horizon.
"""

import time

import numpy as np

from scalarspring.dataset import DatasetConfig, generate_dataset, split_records
from scalarspring.evaluate import evaluate
from scalarspring.integrate import IntegratorConfig
from scalarspring.models import make_model
from scalarspring.physics import PhaseState, SystemParams
from scalarspring.train import TrainConfig, train

params = SystemParams()
config = DatasetConfig(n_trajectories=120, seed=0)
records = generate_dataset(params, config, IntegratorConfig())
train_records, test_records = split_records(records)
print(f"{len(train_records)} training / {len(test_records)} test trajectories, "
      f"{config.n_labels} labels at {config.label_spacing} s")

model = make_model("scalars-hnn", hidden_dims=(32, 32), init_seed=0)
tcfg = TrainConfig(epochs=60, batch_size=60, learning_rate=3e-3, seed=0)
t0 = time.perf_counter()
model, history = train(model, train_records, tcfg, params.qo, params.g)
print(f"\ntrained {tcfg.epochs} epochs in {time.perf_counter() - t0:.0f} s; "
      f"train loss {history.train_loss[0]:.0f} -> {history.train_loss[-1]:.1f}, "
      f"best held-out epoch {history.best_epoch}")

test_states = [PhaseState.from_flat(r.states[0]) for r in test_records]
result = evaluate(model, params, test_states, horizon=60)
print(f"\n60-step evaluation on {len(test_states)} unseen initial conditions:")
print(f"  geometric-mean state relative error: {result.mean_geo_state_err:.4f} "
      f"+/- {result.std_geo_state_err:.4f}")
print(f"  geometric-mean L_perp relative error: {result.mean_geo_lperp_err:.2e}")
print("\nper-step error growth (geometric mean across trajectories):")
for t in (0.5, 1.5, 3.0, 6.0):
    j = int(round(t / config.label_spacing)) - 1
    print(f"  t = {t:4.1f} s: state {result.step_geo_state_err[j]:.4f}   "
          f"L_perp {result.step_geo_lperp_err[j]:.2e}")
print("\nthe Hamiltonian structure pins L_perp near solver precision even")
print("after the state error has grown large.")
