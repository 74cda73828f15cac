import time

import numpy as np

from scalarspring.dataset import DatasetConfig, generate_dataset, split_records
from scalarspring.evaluate import evaluate
from scalarspring.integrate import IntegratorConfig
from scalarspring.models import make_model
from scalarspring.physics import PhaseState, SystemParams
from scalarspring.train import TrainConfig, train

params = SystemParams()
records = generate_dataset(params, DatasetConfig(), IntegratorConfig())
train_records, test_records = split_records(records)
test_states = [PhaseState.from_flat(r.states[0]) for r in test_records[:40]]


def phased(kind, hidden, stages, seed=0):
    model = make_model(kind, hidden_dims=hidden, init_seed=seed)
    t0 = time.perf_counter()
    best = []
    for lr, ep in stages:
        model, hist = train(
            model, train_records,
            TrainConfig(epochs=ep, learning_rate=lr, seed=seed),
            params.qo, params.g,
        )
        best.append(min(hist.holdout_loss))
    mins = (time.perf_counter() - t0) / 60
    res = evaluate(model, params, test_states, horizon=150)
    label = "/".join(f"{lr:g}x{ep}" for lr, ep in stages)
    print(f"{kind} {hidden} [{label}] seed{seed}: {mins:.1f} min, "
          f"holdout stages {['%.3f' % b for b in best]}, "
          f"geo_state={res.mean_geo_state_err:.4f} "
          f"lperp={res.mean_geo_lperp_err:.2e} failed={res.n_failed}", flush=True)
    return res


# lr decay probe at (64, 64)
phased("scalars-hnn", (64, 64), ((3e-3, 200), (1e-3, 150), (3e-4, 150)))
phased("scalars-node", (64, 64), ((3e-3, 200), (1e-3, 150), (3e-4, 150)))
# capacity probe at constant lr, shorter budget
phased("scalars-hnn", (128, 128), ((3e-3, 100),))
phased("scalars-node", (128, 128), ((3e-3, 100),))
print("done", flush=True)
