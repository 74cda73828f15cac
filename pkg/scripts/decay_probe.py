import time
import numpy as np
from scalarspring.physics import SystemParams, PhaseState
from scalarspring.dataset import DatasetConfig, generate_dataset, split_records
from scalarspring.integrate import IntegratorConfig
from scalarspring.models import make_model
from scalarspring.train import TrainConfig, train
from scalarspring.evaluate import evaluate

params = SystemParams()
records = generate_dataset(params, DatasetConfig(), IntegratorConfig())
train_records, test_records = split_records(records)
test_states = [PhaseState.from_flat(r.states[0]) for r in test_records[:40]]

for kind in ("scalars-hnn", "scalars-node"):
    model = make_model(kind, hidden_dims=(64,64), init_seed=0)
    t0 = time.perf_counter()
    best = []
    for lr, ep in ((3e-3, 200), (1e-3, 150), (3e-4, 150)):
        model, hist = train(model, train_records, TrainConfig(epochs=ep, learning_rate=lr, seed=0), params.qo, params.g)
        best.append(min(hist.holdout_loss))
    mins = (time.perf_counter()-t0)/60
    res = evaluate(model, params, test_states, horizon=150)
    print(f"{kind} phased 3e-3/1e-3/3e-4 (200/150/150 ep): {mins:.1f} min, holdout stages {['%.3f'%b for b in best]}, "
          f"geo_state={res.mean_geo_state_err:.4f} lperp={res.mean_geo_lperp_err:.2e} failed={res.n_failed}", flush=True)
