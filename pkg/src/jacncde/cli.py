# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
The ``jacncde`` command.

Results go to stdout, diagnostics to stderr.  Exit codes:

- 0: success,
- 1: a verification check failed,
- 2: invalid configuration, input, or data,
- 3: a run was aborted because of a numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from typing import Any, Callable, Sequence

import numpy as np
import structlog

from ._output import (
    read_checkpoint,
    write_checkpoint,
    write_json,
    write_metrics_csv,
    write_report,
)
from ._utils import _default, get_version
from .data import SPLITS, Dataset
from .exceptions import (
    ConfigError,
    ContractError,
    InputError,
    NumericError,
)
from .fields import FIELD_KINDS, count_params, field_param_count, find_ratio
from .logs import configure_logging
from .runconfig import RunConfig, load_run_config
from .training import TrainReport, evaluate, init_model, set_seed, train
from .verify import CHECKS, run_checks


__all__ = [
    "EXIT_CONFIG",
    "EXIT_NUMERIC",
    "EXIT_OK",
    "EXIT_VERIFY",
    "cmd_compare",
    "cmd_eval",
    "cmd_params",
    "cmd_train",
    "cmd_verify",
    "main",
]

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

COMPARED_FIELDS = ("matrix", "jacobian-truncated")


def _print_json(obj: Any) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=_default))


def _print_table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    cells = [list(map(str, header))] + [list(map(str, r)) for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for r in cells:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())


def _resolve(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(args.config)

    return cfg.with_overrides(
        seed=args.seed, field=getattr(args, "field", None), out=args.out
    )


def _run_dir(cfg: RunConfig, prefix: str | None = None) -> str:
    name = f"{prefix or cfg.model.field}-{cfg.config_hash[:12]}"

    return os.path.join(cfg.out_dir, name)


def _aggregate(reports: Sequence[TrainReport]) -> tuple[float, float]:
    """
    Mean and sample standard deviation (0 for a single run) of the test
    accuracies.
    """
    accs = np.array([r.test_accuracy for r in reports], dtype=np.float64)
    std = float(np.std(accs, ddof=1)) if accs.shape[0] > 1 else 0.0

    return float(np.mean(accs)), std


def _train_seeds(cfg: RunConfig, ds: Dataset) -> dict[str, Any]:
    """
    One training run per seed, sequentially, each writing its own directory.
    Then the coordinator writes ``summary.json``.
    """
    run_dir = _run_dir(cfg)
    run = os.path.basename(run_dir)
    h = cfg.config_hash
    model_cfg = cfg.model.build(ds.channels, ds.classes)
    model_cfg.check_trainable()

    reports = []
    for seed in cfg.seeds:
        seed_dir = os.path.join(run_dir, f"seed-{seed}")
        with structlog.contextvars.bound_contextvars(
            seed=seed, field=model_cfg.field, run=run
        ):
            rng = set_seed(seed)
            report = train(
                init_model(model_cfg, rng),
                ds,
                cfg.training.epochs,
                cfg.training.batch,
                cfg.training.lr,
                rng=rng,
                seed=seed,
            )
            assert report.model is not None

            os.makedirs(seed_dir, exist_ok=True)
            write_metrics_csv(
                os.path.join(seed_dir, "metrics.csv"),
                report.epochs,
                config_hash=h,
                seed=seed,
            )
            write_report(
                os.path.join(seed_dir, "report.json"),
                report,
                config_hash=h,
                seed=seed,
            )
            ckpt = os.path.join(seed_dir, "checkpoint.json")
            write_checkpoint(ckpt, report.model, config_hash=h, seed=seed)
            logger.info("checkpoint_written", path=ckpt)
            logger.info(
                "run_finished",
                test_accuracy=report.test_accuracy,
                best_epoch=report.best_epoch,
                wall_time=report.wall_time,
            )
        reports.append(report)

    mean, std = _aggregate(reports)
    summary = {
        "field": model_cfg.field,
        "param_count": model_cfg.param_count,
        "acc_mean": mean,
        "acc_std": std,
        "runs": [
            {
                "seed": r.seed,
                "test_accuracy": r.test_accuracy,
                "test_loss": r.test_loss,
                "best_epoch": r.best_epoch,
            }
            for r in reports
        ],
        "dir": run_dir,
    }
    write_json(
        os.path.join(run_dir, "summary.json"),
        {**summary, "config": cfg.to_dict()},
        config_hash=h,
        seed=None,
    )

    return summary


def _plan(cfgs: Sequence[RunConfig]) -> dict[str, Any]:
    return {
        "runs": [
            {
                "config": c.to_dict(),
                "config_hash": c.config_hash,
                "dirs": [
                    os.path.join(_run_dir(c), f"seed-{s}") for s in c.seeds
                ],
            }
            for c in cfgs
        ]
    }


def cmd_train(args: argparse.Namespace) -> int:
    """
    Train the configured field once per seed and print the accuracy mean
    and standard deviation over the seeds.
    """
    cfg = _resolve(args)
    if args.dry_run:
        _print_json(_plan([cfg]))
        return EXIT_OK

    cfg.precision.apply()
    summary = _train_seeds(cfg, cfg.dataset.load())

    if args.json:
        _print_json(summary)
    else:
        print(
            f"{summary['field']}: acc_mean={summary['acc_mean']:.4f} "
            f"acc_std={summary['acc_std']:.4f} "
            f"over {len(summary['runs'])} seed(s), "
            f"params={summary['param_count']}"
        )

    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    """
    Train the matrix and the truncated Jacobian field with the same sizes
    and seeds and print accuracy and parameter count side by side.
    """
    base = _resolve(args)
    cfgs = [base.with_overrides(field=f) for f in COMPARED_FIELDS]
    if args.dry_run:
        _print_json(_plan(cfgs))
        return EXIT_OK

    base.precision.apply()
    ds = base.dataset.load()
    rows = []
    for c in cfgs:
        s = _train_seeds(c, ds)
        rows.append(
            {
                "field": s["field"],
                "acc_mean": s["acc_mean"],
                "acc_std": s["acc_std"],
                "param_count": s["param_count"],
                "seeds": len(s["runs"]),
            }
        )

    compare_dir = _run_dir(base, prefix="compare")
    os.makedirs(compare_dir, exist_ok=True)
    write_json(
        os.path.join(compare_dir, "compare.json"),
        {"fields": rows},
        config_hash=base.config_hash,
        seed=None,
    )

    if args.json:
        _print_json({"fields": rows})
    else:
        _print_table(
            ("field", "accuracy", "params"),
            [
                (
                    r["field"],
                    f"{r['acc_mean']:.3f} +- {r['acc_std']:.3f}",
                    r["param_count"],
                )
                for r in rows
            ],
        )

    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """
    Evaluate a checkpoint on one split of the configured dataset, optionally
    with a different Jacobian field.
    """
    cfg = load_run_config(args.config)
    model = read_checkpoint(args.checkpoint)
    if args.field is not None:
        jacobians = {"jacobian-truncated", "jacobian-exact"}
        if args.field != model.config.field and not {
            args.field,
            model.config.field,
        } <= jacobians:
            msg = (
                f"can't evaluate a {model.config.field} checkpoint "
                f"as {args.field}"
            )
            raise ConfigError(msg)
        model = model.with_config(field=args.field)

    cfg.precision.apply()
    ds = cfg.dataset.load()
    if (ds.channels, ds.classes) != (model.config.u, model.config.classes):
        msg = (
            f"checkpoint expects {model.config.u} channels and "
            f"{model.config.classes} classes, dataset has {ds.channels} "
            f"and {ds.classes}"
        )
        raise InputError(msg)

    result = evaluate(model, ds.subset(args.split))
    _print_json(
        {
            "field": model.config.field,
            "split": args.split,
            "accuracy": result.accuracy,
            "loss": result.loss,
            "count": result.count,
        }
    )

    return EXIT_OK


def _param_rows(u: int, v: int, d: int, classes: int) -> list[dict[str, Any]]:
    return [
        {
            "field": kind,
            "field_params": field_param_count(kind, u, v, d),
            "lift": u * v + v,
            "readout": v * classes + classes,
            "total": count_params(kind, u, v, d, classes),
        }
        for kind in COMPARED_FIELDS
    ]


def cmd_params(args: argparse.Namespace) -> int:
    """
    Print parameter counts of both fields: the field part alone, the lift
    ``u*v + v``, the readout ``v*C + C``, and their total.
    """
    for name in ("u", "v", "d", "classes"):
        if getattr(args, name) < 1:
            msg = f"--{name} must be positive"
            raise InputError(msg)

    u, v, d = args.u, args.v, args.d
    found = None
    if args.find_ratio is not None:
        (u, v, d), ratio = find_ratio(args.find_ratio, args.ratio_tol)
        found = {
            "target": args.find_ratio,
            "tol": args.ratio_tol,
            "u": u,
            "v": v,
            "d": d,
        }

    rows = _param_rows(u, v, d, args.classes)
    ratio = rows[0]["field_params"] / rows[1]["field_params"]
    out = {
        "u": u,
        "v": v,
        "d": d,
        "classes": args.classes,
        "fields": rows,
        "field_ratio": ratio,
        "total_ratio": rows[0]["total"] / rows[1]["total"],
    }
    if found is not None:
        out["search"] = found

    if args.json:
        _print_json(out)
    else:
        print(f"u={u} v={v} d={d} classes={args.classes}")
        _print_table(
            ("field", "field params", "lift", "readout", "total"),
            [
                (
                    r["field"],
                    r["field_params"],
                    r["lift"],
                    r["readout"],
                    r["total"],
                )
                for r in rows
            ],
        )
        print(f"field-part ratio matrix/jacobian: {ratio:.3f}")

    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    """
    Run the numerical checks and print one line per check.
    """
    results = run_checks(args.check or None)
    failed = [r.name for r in results if not r.passed]

    if args.json:
        _print_json(
            {
                "checks": [r._asdict() for r in results],
                "failed": failed,
            }
        )
    else:
        _print_table(
            ("status", "check", "value", "detail"),
            [
                (
                    "PASS" if r.passed else "FAIL",
                    r.name,
                    f"{r.value:.4g}" if math.isfinite(r.value) else r.value,
                    r.detail,
                )
                for r in results
            ],
        )
        if failed:
            print(f"failed: {', '.join(failed)}")

    return EXIT_VERIFY if failed else EXIT_OK


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--log-json", action="store_true", help="log JSON lines to stderr"
    )
    common.add_argument("--log-level", default="info", help="lowest log level")
    common.add_argument(
        "--json", action="store_true", help="print results as JSON"
    )

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--config", help="JSON run configuration")
    run.add_argument("--seed", type=int, help="run this seed only")
    run.add_argument(
        "--out", help="output root (default: $JACNCDE_OUT or ./runs)"
    )

    parser = argparse.ArgumentParser(
        prog="jacncde",
        description="Neural CDE classifiers with Jacobian vector fields.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {get_version()}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "train", parents=[common, run], help="train one field over all seeds"
    )
    p.add_argument("--field", choices=FIELD_KINDS)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "compare",
        parents=[common, run],
        help="train both fields and compare them",
    )
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--field", choices=FIELD_KINDS)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "params", parents=[common], help="count parameters of both fields"
    )
    p.add_argument("--u", type=int, default=4)
    p.add_argument("--v", type=int, default=32)
    p.add_argument("--d", type=int, default=128)
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--find-ratio", type=float, metavar="TARGET")
    p.add_argument(
        "--ratio-tol",
        type=float,
        metavar="TOL",
        help="fail unless the ratio found is within TOL of TARGET",
    )
    p.set_defaults(func=cmd_params)

    p = sub.add_parser(
        "verify", parents=[common], help="run the numerical self-checks"
    )
    p.add_argument(
        "--check",
        action="append",
        choices=list(CHECKS),
        help="run only this check (repeatable)",
    )
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    func: Callable[[argparse.Namespace], int] = args.func

    try:
        configure_logging(json=args.log_json, level=args.log_level)
    except ConfigError as e:
        print(f"jacncde: error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return func(args)
    except (ConfigError, InputError, ContractError) as e:
        logger.error("invalid_input", error=str(e), kind=type(e).__name__)
        return EXIT_CONFIG
    except NumericError as e:
        logger.error("numeric_abort", error=str(e), **e.context)
        return EXIT_NUMERIC
