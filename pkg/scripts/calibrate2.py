"""Post-smoothing calibration: lr choice and full-horizon quality, one seed."""

import json
import sys
import time

import numpy as np

from scalarspring.physics import SystemParams, PhaseState
from scalarspring.dataset import DatasetConfig, generate_dataset, split_records
from scalarspring.integrate import IntegratorConfig
from scalarspring.models import make_model, save_model
from scalarspring.train import TrainConfig, train
from scalarspring.evaluate import evaluate

params = SystemParams()
records = generate_dataset(params, DatasetConfig(), IntegratorConfig())
train_records, test_records = split_records(records)
test_states = [PhaseState.from_flat(r.states[0]) for r in test_records[:100]]

runs = [
    ("scalars-hnn", 1e-3),
    ("scalars-hnn", 3e-3),
    ("scalars-node", 1e-3),
    ("scalars-node", 3e-3),
    ("mlp-hnn", 1e-3),
    ("mlp-node", 1e-3),
]
out = {}
for kind, lr in runs:
    model = make_model(kind, hidden_dims=(64, 64), init_seed=0)
    tcfg = TrainConfig(epochs=500, learning_rate=lr, seed=0)
    t0 = time.perf_counter()
    model, hist = train(model, train_records, tcfg, params.qo, params.g)
    ttrain = time.perf_counter() - t0
    res = evaluate(model, params, test_states, horizon=150)
    key = f"{kind}@{lr}"
    out[key] = {
        "train_min": ttrain / 60,
        "geo_state": res.mean_geo_state_err,
        "geo_state_std": res.std_geo_state_err,
        "geo_lperp": res.mean_geo_lperp_err,
        "n_failed": res.n_failed,
        "best_epoch": hist.best_epoch,
        "best_holdout": min(hist.holdout_loss),
        "holdout_every50": hist.holdout_loss[::50],
    }
    save_model(model, f"/tmp/calib2-{kind}-lr{lr}.json")
    print(f"{key}: {ttrain/60:.1f} min train, geo_state={res.mean_geo_state_err:.4f} "
          f"geo_lperp={res.mean_geo_lperp_err:.2e} failed={res.n_failed} "
          f"best_ep={hist.best_epoch} best_holdout={min(hist.holdout_loss):.2f}", flush=True)

with open("/tmp/calib2.json", "w") as fh:
    json.dump(out, fh, indent=1)
print("done", flush=True)
