"""Command-line entry point: train, evaluate, ablate, estimate-mi.

Configs are strict JSON documents: unknown keys are rejected by name so a
typo cannot silently change an experiment.  A --seed flag overrides the
file's seed.  Exit codes: 0 success, 1 runtime failure, 2 usage or config
error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import harness, mi
from .data import DatasetSpec, SchemaError
from .harness import ConfigError, OptimizerConfig, RunConfig, TaskConfig
from .mi import MineConfig
from .model import CheckpointError, ModelConfig, load_checkpoint
from .sampling import SamplingSchedule

log = logging.getLogger("predgen")

_RUN_SECTIONS = {
    "dataset": DatasetSpec,
    "model": ModelConfig,
    "optimizer": OptimizerConfig,
    "schedule": SamplingSchedule,
    "task": TaskConfig,
}
_RUN_SCALARS = {
    "regime",
    "loss",
    "seed",
    "eval_every",
    "force_mixing_prob",
    "generator_alpha",
}
_TUPLE_FIELDS = {"value_range", "ordered_alpha", "generator_alpha", "alpha"}


def _build_section(cls, doc: dict, section: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"section {section!r} must be an object")
    allowed = {f.name for f in dataclasses.fields(cls)}
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r} in section {section!r}")
    kwargs = {
        k: tuple(v) if k in _TUPLE_FIELDS and v is not None else v
        for k, v in doc.items()
    }
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {section!r}: {exc}") from None


def parse_run_config(doc: dict, seed_override: int | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    allowed = _RUN_SCALARS | set(_RUN_SECTIONS)
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r}")
    if "regime" not in doc:
        raise ConfigError("config is missing the required key 'regime'")
    kwargs: dict = {"regime": doc["regime"]}
    for name, cls in _RUN_SECTIONS.items():
        if name in doc and doc[name] is not None:
            kwargs[name] = _build_section(cls, doc[name], name)
    for key in ("loss", "seed", "eval_every", "force_mixing_prob"):
        if key in doc and doc[key] is not None:
            kwargs[key] = doc[key]
    if doc.get("generator_alpha") is not None:
        kwargs["generator_alpha"] = tuple(doc["generator_alpha"])
    if seed_override is not None:
        kwargs["seed"] = seed_override
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from None


# -- subcommands -----------------------------------------------------------


def cmd_train(args) -> int:
    run = parse_run_config(_load_json(args.config), args.seed)
    run_dir = harness.run_and_save(run, args.out)
    log.info("run artifacts in %s", run_dir)
    print(run_dir)
    return 0


def cmd_evaluate(args) -> int:
    doc = _load_json(args.config)
    checkpoint = doc.pop("checkpoint", None)
    if checkpoint is None:
        raise ConfigError("evaluate config needs a 'checkpoint' path")
    run = parse_run_config(doc, args.seed)
    params, model_cfg, _ = load_checkpoint(checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    record = {}
    for split in ("train", "test"):
        metrics = harness.evaluate(params, run, split, model_cfg=model_cfg)
        record[split] = metrics.to_dict()
    with open(out / "metrics.json", "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
    print(json.dumps(record, sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    run = parse_run_config(_load_json(args.config), args.seed)
    values = None
    if args.values:
        raw = [v.strip() for v in args.values.split(",") if v.strip()]
        values = [int(v) if v.lstrip("-").isdigit() else v for v in raw]
    rows = harness.ablate(run, args.axis, values)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fields = sorted({k for row in rows for k in row})
    with open(out / "ablation.csv", "w") as fh:
        fh.write(",".join(fields) + "\n")
        for row in rows:
            fh.write(",".join(str(row.get(k, "")) for k in fields) + "\n")
    with open(out / "ablation.json", "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
    for row in rows:
        print(json.dumps(row, sort_keys=True))
    return 0


def _load_checkpoint_or_config_error(path: str):
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise ConfigError(f"checkpoint not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from None
    except CheckpointError as exc:
        raise ConfigError(str(exc)) from None


def cmd_estimate_mi(args) -> int:
    doc = _load_json(args.config)
    allowed = {
        "predictor_checkpoint",
        "generative_checkpoint",
        "dataset",
        "mine",
        "k",
        "pool_spec",
        "token_mi_position",
    }
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r}")
    for key in ("predictor_checkpoint", "generative_checkpoint", "dataset"):
        if key not in doc:
            raise ConfigError(f"estimate-mi config needs {key!r}")
    spec = _build_section(DatasetSpec, doc["dataset"], "dataset")
    mine_cfg = _build_section(MineConfig, doc.get("mine", {}), "mine")
    if args.seed is not None:
        mine_cfg = dataclasses.replace(mine_cfg, seed=args.seed)
    if args.k is not None:
        ks = [int(v) for v in str(args.k).split(",") if v != ""]
    else:
        k_doc = doc.get("k", 2)
        ks = [int(v) for v in (k_doc if isinstance(k_doc, list) else [k_doc])]

    predictor = _load_checkpoint_or_config_error(doc["predictor_checkpoint"])[:2]
    generative = _load_checkpoint_or_config_error(doc["generative_checkpoint"])[:2]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, k in enumerate(ks):
        pooled, full = mi.dpi_compare(
            predictor,
            generative,
            spec,
            k=k,
            cfg=mine_cfg,
            pool_spec=doc.get("pool_spec", "last_token"),
        )
        if i == 0:  # the pooled side does not depend on k
            rows.append(
                {
                    "dataset": spec.name,
                    "representation": "pooled",
                    "k": "",
                    "seed": mine_cfg.seed,
                    "nats": f"{pooled.nats:.6f}",
                }
            )
        rows.append(
            {
                "dataset": spec.name,
                "representation": "reduced",
                "k": k,
                "seed": mine_cfg.seed,
                "nats": f"{full.nats:.6f}",
            }
        )
    mi.write_mi_report(out / "mi_report.csv", rows)

    token_cfg = dataclasses.replace(mine_cfg, epochs=max(10, mine_cfg.epochs // 4))
    matrix = mi.token_mi_matrix(
        generative, spec, doc.get("token_mi_position", 0), token_cfg
    )
    mi.write_token_mi(out / "token_mi.csv", matrix)
    for row in rows:
        print(json.dumps(row, sort_keys=True))
    return 0


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="predgen",
        description="train and probe tiny generation-based predictors",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("train", cmd_train),
        ("evaluate", cmd_evaluate),
        ("ablate", cmd_ablate),
        ("estimate-mi", cmd_estimate_mi),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default="runs", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("-v", "--verbose", action="count", default=0)
        p.set_defaults(handler=fn)
        if name == "ablate":
            p.add_argument(
                "--axis",
                required=True,
                help="max_steps_for_sampling | granularity | loss_combiner",
            )
            p.add_argument("--values", default=None, help="comma-separated values")
        if name == "estimate-mi":
            p.add_argument("--k", default=None, help="components (int or comma list)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (ConfigError, SchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        log.debug("traceback", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
