# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
Writers and readers for per-run artifacts.

Every artifact carries the package version, the artifact format version, the
hash of the resolved run configuration and the seed.
"""

from __future__ import annotations

import datetime
import json
import os
import threading

from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd

from ._utils import get_version
from .autodiff import as_tensor
from .exceptions import ParseError
from .training import EpochMetrics, Model, ModelConfig, TrainReport


ARTIFACT_VERSION = 1
CHECKPOINT_FORMAT = "jacncde-checkpoint"

WRITE_LOCKS: dict[str, threading.Lock] = {}
_LOCKS_LOCK = threading.Lock()


def _get_lock_for_path(path: str | os.PathLike[str]) -> threading.Lock:
    key = os.path.abspath(path)
    with _LOCKS_LOCK:
        lock = WRITE_LOCKS.get(key)
        if lock is None:
            lock = threading.Lock()
            WRITE_LOCKS[key] = lock

    return lock


def artifact_header(config_hash: str, seed: int | None) -> dict[str, Any]:
    return {
        "version": get_version(),
        "artifact_version": ARTIFACT_VERSION,
        "config_hash": config_hash,
        "seed": seed,
    }


def write_json(
    path: str | os.PathLike[str],
    payload: Mapping[str, Any],
    *,
    config_hash: str,
    seed: int | None,
) -> None:
    """
    Write *payload* plus the artifact header to *path*.

    The file is replaced atomically, and writers of the same path are
    serialized.
    """
    doc = {**artifact_header(config_hash, seed), **payload}
    tmp = f"{path}.tmp-{threading.get_ident()}"
    with _get_lock_for_path(path):
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
        os.replace(tmp, path)


def read_json(path: str | os.PathLike[str]) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", line=e.lineno) from None
    if not isinstance(doc, dict):
        msg = "expected a JSON object"
        raise ParseError(msg)

    return doc


def metrics_frame(epochs: Sequence[EpochMetrics]) -> pd.DataFrame:
    """
    Long format: one row per epoch and split.
    """
    rows = []
    for e in epochs:
        rows.append((e.epoch, "train", e.train_loss, e.train_accuracy))
        rows.append((e.epoch, "val", e.val_loss, e.val_accuracy))

    return pd.DataFrame(rows, columns=["epoch", "split", "loss", "accuracy"])


def write_metrics_csv(
    path: str | os.PathLike[str],
    epochs: Sequence[EpochMetrics],
    *,
    config_hash: str,
    seed: int | None,
) -> None:
    """
    Write ``epoch,split,loss,accuracy`` rows below ``# key=value`` header
    comments.

    Nothing time-dependent goes in, so identical runs give identical files.
    """
    header = artifact_header(config_hash, seed)
    lock = _get_lock_for_path(path)
    with lock, open(path, "w", encoding="utf-8", newline="") as f:
        for k in ("config_hash", "seed", "version", "artifact_version"):
            f.write(f"# {k}={header[k]}\n")
        metrics_frame(epochs).to_csv(f, index=False, float_format="%.17g")


def read_metrics_csv(path: str | os.PathLike[str]) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def write_report(
    path: str | os.PathLike[str],
    report: TrainReport,
    *,
    config_hash: str,
    seed: int | None,
) -> None:
    payload = report.to_dict()
    payload["created_at"] = datetime.datetime.now(
        tz=datetime.timezone.utc
    ).isoformat()

    write_json(path, payload, config_hash=config_hash, seed=seed)


def write_checkpoint(
    path: str | os.PathLike[str],
    model: Model,
    *,
    config_hash: str,
    seed: int | None,
) -> None:
    """
    Store *model* as JSON: its config and every parameter with shape and
    row-major data at round-trip precision.
    """
    payload = {
        "format": CHECKPOINT_FORMAT,
        "model": model.config.to_dict(),
        "params": {
            name: {
                "shape": list(a.shape),
                "data": np.asarray(a, dtype=np.float64).reshape(-1).tolist(),
            }
            for name, a in model.params.items()
        },
    }

    write_json(path, payload, config_hash=config_hash, seed=seed)


def read_checkpoint(path: str | os.PathLike[str]) -> Model:
    """
    Load a model written by `write_checkpoint`.

    Raises:
        ParseError: If the file isn't a checkpoint this version can read.
    """
    doc = read_json(path)
    if doc.get("format") != CHECKPOINT_FORMAT:
        msg = f"not a checkpoint: format is {doc.get('format')!r}"
        raise ParseError(msg)
    if doc.get("artifact_version") != ARTIFACT_VERSION:
        msg = f"unsupported artifact version {doc.get('artifact_version')!r}"
        raise ParseError(msg)

    try:
        cfg = ModelConfig.from_dict(doc["model"])
        params = {
            name: as_tensor(
                np.asarray(p["data"], dtype=np.float64).reshape(p["shape"])
            )
            for name, p in doc["params"].items()
        }
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed checkpoint: {e}") from None

    return Model(cfg, params)
