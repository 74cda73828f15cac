"""Command-line entry point: generate -> train -> eval with one config file.

The run config is a JSON tree with sections `system`, `dataset`, `integrator`,
`training`, `model`, `eval` and an `output_dir`; unknown keys anywhere are
rejected before any work starts, and `--set section.key=value` overrides
individual entries (flags beat file beats defaults).

Exit codes: 0 success, 2 usage/config error, 3 I/O failure, 4 numerical
failure (non-finite training loss).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass

from . import __version__
from .dataset import (
    DatasetConfig,
    DatasetError,
    DatasetFormatError,
    generate_dataset,
    load_dataset,
    save_dataset,
    split_records,
)
from .evaluate import evaluate, summarize, write_per_step_csv, write_summary_json
from .integrate import IntegratorConfig
from .models import (
    MODEL_KINDS,
    CheckpointError,
    atomic_write_text,
    checkpoint_extra,
    load_model,
    make_model,
    save_model,
)
from .physics import PhaseState, SystemParams
from .scalars import DEFAULT_TRANSFORMS
from .train import NonFiniteLossError, TrainConfig, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    pass


_MODEL_DEFAULTS = {
    "kind": "scalars-hnn",
    "hidden_dims": [128, 128],
    "activation": "swish",
    "init_seed": 0,
    "transforms": list(DEFAULT_TRANSFORMS),
}
_EVAL_DEFAULTS = {"horizon": 150, "n_test_trajectories": 100}

_SCHEMA = {
    "system": ("m1", "m2", "k1", "k2", "l1", "l2", "qo", "g"),
    "dataset": ("n_trajectories", "n_labels", "label_spacing", "seed",
                "init_position_spread", "init_momentum_spread"),
    "integrator": ("method", "step", "substeps_per_label"),
    "training": ("learning_rate", "epochs", "batch_size", "optimizer", "seed",
                 "substeps_per_label", "holdout_fraction"),
    "model": tuple(_MODEL_DEFAULTS),
    "eval": tuple(_EVAL_DEFAULTS),
}


@dataclass(frozen=True)
class RunConfig:
    system: SystemParams
    dataset: DatasetConfig
    integrator: IntegratorConfig
    training: TrainConfig
    model: dict
    eval: dict
    output_dir: str
    raw: dict

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()


def _reject_unknown(tree: dict) -> None:
    for section, value in tree.items():
        if section == "output_dir":
            continue
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key in value:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")


def _build(tree: dict) -> RunConfig:
    _reject_unknown(tree)

    def section(name):
        return dict(tree.get(name, {}))

    def make(name, ctor, kwargs):
        try:
            return ctor(**kwargs)
        except (TypeError, ValueError) as exc:
            message = str(exc)
            first = message.split(" ")[0] if message else ""
            if first in _SCHEMA.get(name, ()):
                # name the offending field by its config path
                raise ConfigError(f"{name}.{message}") from exc
            raise ConfigError(f"{name}: {message}") from exc

    if tree.get("system"):
        system = make("system", SystemParams.from_dict, {"d": section("system")})
    else:
        system = SystemParams()
    ds = make("dataset", DatasetConfig, section("dataset"))
    integ = make("integrator", IntegratorConfig, section("integrator"))
    tr = make("training", TrainConfig, section("training"))
    model = {**_MODEL_DEFAULTS, **section("model")}
    if model["kind"] not in MODEL_KINDS:
        raise ConfigError(f"model.kind must be one of {MODEL_KINDS}")
    ev = {**_EVAL_DEFAULTS, **section("eval")}
    if int(ev["horizon"]) < 1 or int(ev["n_test_trajectories"]) < 1:
        raise ConfigError("eval.horizon and eval.n_test_trajectories must be >= 1")
    return RunConfig(
        system=system,
        dataset=ds,
        integrator=integ,
        training=tr,
        model=model,
        eval=ev,
        output_dir=str(tree.get("output_dir", "runs")),
        raw=tree,
    )


def _validate_value_paths(tree: dict, overrides) -> dict:
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        path, raw_value = item.split("=", 1)
        parts = path.split(".")
        if len(parts) != 2 and not (len(parts) == 1 and parts[0] == "output_dir"):
            raise ConfigError(f"--set path must be section.key, got {path!r}")
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        if len(parts) == 1:
            tree["output_dir"] = value
        else:
            tree.setdefault(parts[0], {})[parts[1]] = value
    return tree


def load_run_config(path: str, overrides=None) -> RunConfig:
    try:
        with open(path) as fh:
            tree = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(tree, dict):
        raise ConfigError("config root must be a JSON object")
    tree = _validate_value_paths(tree, overrides)
    return _build(tree)


def _dataset_matches(cfg: RunConfig, loaded) -> bool:
    return (
        loaded.params.to_dict() == cfg.system.to_dict()
        and loaded.config.to_dict() == cfg.dataset.to_dict()
    )


def cmd_generate(args) -> int:
    cfg = load_run_config(args.config, args.set)
    out = args.out or os.path.join(cfg.output_dir, "dataset.json")
    try:
        records = generate_dataset(cfg.system, cfg.dataset, cfg.integrator)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    try:
        save_dataset(records, cfg.system, cfg.dataset, cfg.integrator, out)
        atomic_write_text(
            out + ".provenance.json",
            json.dumps({"config_hash": cfg.config_hash, "tool_version": __version__},
                       indent=1, sort_keys=True),
        )
    except OSError as exc:
        print(f"error: cannot write dataset: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(records)} trajectories to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, args.set)
    try:
        data = load_dataset(args.dataset)
    except OSError as exc:
        print(f"error: cannot read dataset: {exc}", file=sys.stderr)
        return EXIT_IO
    except DatasetFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not _dataset_matches(cfg, data):
        print("error: dataset header does not match config "
              "(system/dataset sections differ)", file=sys.stderr)
        return EXIT_CONFIG
    train_records, _ = split_records(data.records)
    model = make_model(
        cfg.model["kind"],
        hidden_dims=tuple(cfg.model["hidden_dims"]),
        activation=cfg.model["activation"],
        init_seed=int(cfg.model["init_seed"]),
        transforms=tuple(cfg.model["transforms"]),
    )
    out_dir = args.out or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    started = time.perf_counter()
    try:
        model, history = train(model, train_records, cfg.training,
                               cfg.system.qo, cfg.system.g)
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    elapsed = time.perf_counter() - started
    ckpt = os.path.join(out_dir, f"{cfg.model['kind']}-seed{cfg.training.seed}.checkpoint.json")
    try:
        save_model(model, ckpt, extra={
            "config_hash": cfg.config_hash,
            "dataset_checksum": data.checksum,
            "tool_version": __version__,
            "train_seed": cfg.training.seed,
            "best_epoch": history.best_epoch,
        })
        history.write_csv(os.path.join(out_dir, f"{cfg.model['kind']}-seed{cfg.training.seed}.history.csv"))
        atomic_write_text(
            os.path.join(out_dir, f"{cfg.model['kind']}-seed{cfg.training.seed}.timing.json"),
            json.dumps({
                "wall_clock_seconds": elapsed,
                "epochs": cfg.training.epochs,
                "best_epoch": history.best_epoch,
                "final_train_loss": history.train_loss[-1],
                "best_holdout_loss": min(history.holdout_loss),
            }, indent=1, sort_keys=True),
        )
    except OSError as exc:
        print(f"error: cannot write training outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"trained {cfg.model['kind']} (seed {cfg.training.seed}) in {elapsed:.1f} s; "
          f"checkpoint: {ckpt}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config, args.set)
    try:
        data = load_dataset(args.dataset)
    except OSError as exc:
        print(f"error: cannot read dataset: {exc}", file=sys.stderr)
        return EXIT_IO
    except DatasetFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    wanted = None
    if args.models:
        wanted = [m.strip() for m in args.models.split(",") if m.strip()]
        for m in wanted:
            if m not in MODEL_KINDS:
                print(f"error: unknown model kind {m!r} in --models", file=sys.stderr)
                return EXIT_CONFIG

    results_by_kind: dict = {}
    for path in args.checkpoints:
        try:
            model = load_model(path)
            extra = checkpoint_extra(path)
        except (OSError, CheckpointError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if wanted is not None and model.kind not in wanted:
            continue
        if extra.get("dataset_checksum") not in (None, data.checksum) and not args.force:
            print(
                f"error: checkpoint {path} was trained on a different dataset "
                f"(checksum mismatch); pass --force to evaluate anyway",
                file=sys.stderr,
            )
            return EXIT_CONFIG
        results_by_kind.setdefault(model.kind, []).append((path, model))

    if not results_by_kind:
        print("error: no checkpoints selected for evaluation", file=sys.stderr)
        return EXIT_CONFIG

    _, test_records = split_records(data.records)
    n_test = min(int(cfg.eval["n_test_trajectories"]), len(test_records))
    initial_states = [PhaseState.from_flat(r.states[0]) for r in test_records[:n_test]]

    out_dir = args.out or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    eval_results: dict = {}
    for kind, entries in sorted(results_by_kind.items()):
        eval_results[kind] = [
            evaluate(
                model,
                cfg.system,
                initial_states,
                horizon=int(cfg.eval["horizon"]),
                label_spacing=cfg.dataset.label_spacing,
                substeps_per_label=cfg.training.substeps_per_label,
                gt_step=cfg.integrator.step,
            )
            for _, model in entries
        ]
    summary = summarize(eval_results)
    try:
        write_summary_json(
            os.path.join(out_dir, "eval_summary.json"),
            summary,
            provenance={
                "config_hash": cfg.config_hash,
                "dataset_checksum": data.checksum,
                "tool_version": __version__,
                "n_test_trajectories": n_test,
                "horizon": int(cfg.eval["horizon"]),
            },
        )
        for kind, results in eval_results.items():
            write_per_step_csv(os.path.join(out_dir, f"per_step-{kind}.csv"), results)
    except OSError as exc:
        print(f"error: cannot write evaluation outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    for kind in sorted(summary):
        cell = summary[kind]["state_rel_err"]
        print(f"{kind}: state rel err geomean {cell['mean']:.4g} +/- {cell['std']:.2g} "
              f"({cell['per_seed']})")
    print(f"summary: {os.path.join(out_dir, 'eval_summary.json')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scalarspring",
        description="Generate pendulum data, train equivariant dynamics models, "
                    "and evaluate long rollouts.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="integrate and store the ground-truth dataset")
    p_gen.add_argument("--config", required=True, help="run-config JSON path")
    p_gen.add_argument("--out", help="dataset output path (default: <output_dir>/dataset.json)")
    p_gen.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config entry")
    p_gen.set_defaults(func=cmd_generate)

    p_train = sub.add_parser("train", help="train the configured model on a dataset")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--dataset", required=True, help="dataset JSON path")
    p_train.add_argument("--out", help="output directory (default: config output_dir)")
    p_train.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate checkpoints on the test split")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("checkpoints", nargs="+", metavar="CHECKPOINT",
                        help="checkpoint JSON paths (model kind read from file)")
    p_eval.add_argument("--models", help="comma-separated model kinds to include")
    p_eval.add_argument("--force", action="store_true",
                        help="evaluate even if dataset provenance does not match")
    p_eval.add_argument("--out", help="output directory (default: config output_dir)")
    p_eval.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, matching our config exit code
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
