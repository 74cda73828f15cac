"""Calibration driver: full training + evaluation pipeline for one seed.

Writes progress to stdout; used to pick defaults (hidden size, epochs) that
meet the quality targets within the wall-clock budget.
"""

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

HIDDEN = tuple(int(x) for x in sys.argv[1].split(",")) if len(sys.argv) > 1 else (64, 64)
EPOCHS = int(sys.argv[2]) if len(sys.argv) > 2 else 500
SEED = int(sys.argv[3]) if len(sys.argv) > 3 else 0
KINDS = sys.argv[4].split(",") if len(sys.argv) > 4 else [
    "scalars-hnn", "scalars-node", "mlp-hnn", "mlp-node"]

params = SystemParams()
print(f"hidden={HIDDEN} epochs={EPOCHS} seed={SEED}", flush=True)

t0 = time.perf_counter()
records = generate_dataset(params, DatasetConfig(), IntegratorConfig())
print(f"dataset: {time.perf_counter()-t0:.1f}s", flush=True)
train_records, test_records = split_records(records)
test_states = [PhaseState.from_flat(r.states[0]) for r in test_records[:100]]

results = {}
for kind in KINDS:
    model = make_model(kind, hidden_dims=HIDDEN, init_seed=SEED)
    tcfg = TrainConfig(epochs=EPOCHS, seed=SEED)
    t0 = time.perf_counter()
    model, hist = train(model, train_records, tcfg, params.qo, params.g)
    ttrain = time.perf_counter() - t0
    t0 = time.perf_counter()
    res = evaluate(model, params, test_states, horizon=150)
    teval = time.perf_counter() - t0
    results[kind] = {
        "train_seconds": ttrain,
        "eval_seconds": teval,
        "geo_state_err_mean": res.mean_geo_state_err,
        "geo_state_err_std": res.std_geo_state_err,
        "geo_lperp_err_mean": res.mean_geo_lperp_err,
        "pooled_state": res.pooled_geo_state_err,
        "best_epoch": hist.best_epoch,
        "final_train_loss": hist.train_loss[-1],
        "best_holdout": min(hist.holdout_loss),
        "loss_curve_every25": hist.holdout_loss[::25],
    }
    save_model(model, f"/tmp/calib-{kind}-h{HIDDEN[0]}-e{EPOCHS}-s{SEED}.json")
    print(f"{kind}: train {ttrain/60:.1f} min, eval {teval:.0f}s, "
          f"geo state err {res.mean_geo_state_err:.4f} +/- {res.std_geo_state_err:.4f}, "
          f"lperp {res.mean_geo_lperp_err:.2e}, best epoch {hist.best_epoch}", flush=True)

with open(f"/tmp/calib-h{HIDDEN[0]}-e{EPOCHS}-s{SEED}.json", "w") as fh:
    json.dump(results, fh, indent=1)
print("done", flush=True)
