"""Build the shipped reference artifacts used by the golden-file test.

Creates a miniature but fully real pipeline run: a small config, a briefly
trained checkpoint, and the bit-exact evaluation summary it produces.  The
acceptance suite regenerates the dataset from the config (generation is
deterministic), evaluates the shipped checkpoint, and compares the summary
byte for byte.
"""

import json
import os
import pathlib
import shutil
import sys
import tempfile

from scalarspring.cli import main

ASSETS = pathlib.Path(__file__).resolve().parents[1] / "assets" / "reference"

CONFIG = {
    "system": {"m1": 1.0, "m2": 1.0, "k1": 10.0, "k2": 10.0, "l1": 1.0, "l2": 1.0,
               "qo": [0.0, 0.0, 0.0], "g": [0.0, 0.0, -9.8]},
    "dataset": {"n_trajectories": 25, "n_labels": 5, "label_spacing": 0.1,
                "seed": 2024, "init_position_spread": 0.5,
                "init_momentum_spread": 1.0},
    "integrator": {"method": "RK4", "step": 0.001, "substeps_per_label": 10},
    "training": {"learning_rate": 0.003, "epochs": 40, "batch_size": 10,
                 "optimizer": "Adam", "seed": 0, "substeps_per_label": 10},
    "model": {"kind": "scalars-hnn", "hidden_dims": [16, 16], "activation": "swish",
              "init_seed": 0, "transforms": ["identity", "soft_sqrt_abs"]},
    "eval": {"horizon": 25, "n_test_trajectories": 5},
    "output_dir": "runs",
}


def run() -> None:
    ASSETS.mkdir(parents=True, exist_ok=True)
    workdir = pathlib.Path(tempfile.mkdtemp(prefix="scalarspring-ref-"))
    out = workdir / "runs"
    config_path = ASSETS / "config.json"
    config_path.write_text(json.dumps(CONFIG, indent=1))

    dataset = out / "dataset.json"
    assert main(["generate", "--config", str(config_path), "--out", str(dataset)]) == 0
    assert main(["train", "--config", str(config_path), "--dataset", str(dataset),
                 "--out", str(out)]) == 0
    ckpt = out / "scalars-hnn-seed0.checkpoint.json"
    assert main(["eval", "--config", str(config_path), "--dataset", str(dataset),
                 str(ckpt), "--out", str(out)]) == 0

    shutil.copy(ckpt, ASSETS / "checkpoint.json")
    shutil.copy(out / "eval_summary.json", ASSETS / "eval_summary.json")
    print(f"reference artifacts written to {ASSETS}")


if __name__ == "__main__":
    sys.exit(run())
