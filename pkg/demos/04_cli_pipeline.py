"""The three CLI stages wired together on a miniature configuration.

Writes a run config, then drives `generate`, `train`, and `eval` exactly as a
shell user would, and prints the artifacts each stage leaves behind.
"""

import json
import pathlib
import subprocess
import sys
import tempfile

workdir = pathlib.Path(tempfile.mkdtemp(prefix="scalarspring-demo-"))
config = {
    "dataset": {"n_trajectories": 40, "n_labels": 5, "label_spacing": 0.1,
                "seed": 3, "init_position_spread": 0.5, "init_momentum_spread": 1.0},
    "training": {"learning_rate": 0.003, "epochs": 15, "batch_size": 16,
                 "optimizer": "Adam", "seed": 0, "substeps_per_label": 10},
    "model": {"kind": "scalars-node", "hidden_dims": [24, 24]},
    "eval": {"horizon": 30, "n_test_trajectories": 8},
    "output_dir": str(workdir / "runs"),
}
config_path = workdir / "config.json"
config_path.write_text(json.dumps(config, indent=1))
print(f"run config: {config_path}")


def run(*args):
    cmd = [sys.executable, "-m", "scalarspring.cli", *args]
    print("\n$ scalarspring " + " ".join(args))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    print(proc.stdout.strip())
    if proc.returncode != 0:
        print(proc.stderr.strip())
        raise SystemExit(proc.returncode)


dataset = workdir / "runs" / "dataset.json"
run("generate", "--config", str(config_path))
run("train", "--config", str(config_path), "--dataset", str(dataset))
checkpoint = workdir / "runs" / "scalars-node-seed0.checkpoint.json"
run("eval", "--config", str(config_path), "--dataset", str(dataset), str(checkpoint))

print("\nartifacts:")
for path in sorted((workdir / "runs").iterdir()):
    print(f"  {path.name}")
summary = json.loads((workdir / "runs" / "eval_summary.json").read_text())
print("\neval summary cell for scalars-node:")
print(json.dumps(summary["summary"]["scalars-node"]["state_rel_err"], indent=2))
