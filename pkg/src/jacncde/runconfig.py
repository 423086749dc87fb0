# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
The JSON run configuration of the command line tool.

A run configuration is a single JSON object with the sections ``dataset``,
``model``, ``training``, ``output``, ``seeds``, and ``precision``.  Every
section is optional, every key inside a section is checked, and unknown keys
are errors.  It's validated completely before anything is computed.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os

from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Mapping, Sequence

from ._config import _DTYPES, configure
from ._utils import config_hash
from .autodiff import SurrogateConfig
from .data import (
    SYNTH_KINDS,
    CsvSchema,
    Dataset,
    PreprocessOptions,
    load_uea,
    parse_csv,
    preprocess,
    split_dataset,
    synth,
)
from .exceptions import ConfigError
from .fields import FIELD_KINDS
from .interpolation import INTERPOLATION_KINDS
from .odesolver import SolverConfig
from .training import ModelConfig


__all__ = [
    "DATASET_KINDS",
    "DatasetSpec",
    "ModelSpec",
    "OutputSpec",
    "PrecisionSpec",
    "RunConfig",
    "TrainingSpec",
    "default_out",
    "load_run_config",
]

DATASET_KINDS = ("synth", "ts", "csv")
DEFAULT_OUT = "runs"
OUT_ENV = "JACNCDE_OUT"


def default_out() -> str:
    """
    The output root if neither ``--out`` nor the config names one:
    ``$JACNCDE_OUT`` or ``./runs``.
    """
    return os.environ.get(OUT_ENV) or DEFAULT_OUT


def _build(
    cls: Any,
    section: str,
    raw: Any,
    nested: Mapping[str, Any] | None = None,
) -> Any:
    """
    Instantiate the dataclass *cls* from the JSON object *raw*.

    Keys *cls* doesn't have are rejected.  Values of the keys in *nested* are
    built recursively into the dataclass given there.
    """
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        msg = f"{section}: expected an object, got {type(raw).__name__}"
        raise ConfigError(msg)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        msg = f"{section}: unknown key(s) {unknown}; known: {sorted(known)}"
        raise ConfigError(msg)

    kw = dict(raw)
    for name, sub in (nested or {}).items():
        if name in kw:
            kw[name] = _build(sub, f"{section}.{name}", kw[name])
    try:
        return cls(**kw)
    except ConfigError as e:
        if str(e).startswith(section):
            raise
        raise ConfigError(f"{section}: {e}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{section}: {e}") from None


def _expect_number(section: str, name: str, value: Any, kind: type) -> None:
    # bool is an int subclass, but never a valid size.
    accepted = (int,) if kind is int else (int, float)
    if isinstance(value, bool) or not isinstance(value, accepted):
        msg = f"{section}.{name} must be {'an integer' if kind is int else 'a number'}, not {value!r}"
        raise ConfigError(msg)
    if isinstance(value, float) and not math.isfinite(value):
        msg = f"{section}.{name} must be finite, not {value!r}"
        raise ConfigError(msg)


@dataclass(frozen=True)
class DatasetSpec:
    """
    Where the data comes from and how it's split and preprocessed.

    *kind* is ``"synth"`` (uses *synth*, *n*, *length*, *noise*, *seed*),
    ``"ts"`` (a *train* and a *test* file in the UEA format), or ``"csv"``
    (one long-format *path* plus an optional *csv* schema).
    """

    kind: str = "synth"
    synth: str = "sine-freq"
    n: int = 512
    length: int = 50
    noise: float = 0.05
    seed: int = 0
    train: str | None = None
    test: str | None = None
    path: str | None = None
    csv: CsvSchema = dataclasses.field(default_factory=CsvSchema)
    preprocess: PreprocessOptions = dataclasses.field(
        default_factory=PreprocessOptions
    )
    val_fraction: float = 0.15
    test_fraction: float = 0.2
    split_seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in DATASET_KINDS:
            msg = f"kind must be one of {DATASET_KINDS}, not {self.kind!r}"
            raise ConfigError(msg)
        for name in ("n", "length", "seed", "split_seed"):
            _expect_number("dataset", name, getattr(self, name), int)
        for name in ("noise", "val_fraction", "test_fraction"):
            _expect_number("dataset", name, getattr(self, name), float)

        if self.kind == "synth":
            if self.synth not in SYNTH_KINDS:
                msg = f"synth must be one of {SYNTH_KINDS}, not {self.synth!r}"
                raise ConfigError(msg)
            if self.n < 2 or self.length < 2:
                msg = f"need n >= 2 and length >= 2, got {self.n} and {self.length}"
                raise ConfigError(msg)
            if self.noise < 0:
                msg = f"noise must be non-negative, not {self.noise!r}"
                raise ConfigError(msg)
        elif self.kind == "ts":
            self._check_files("train", "test")
        else:
            self._check_files("path")

        for name in ("val_fraction", "test_fraction"):
            value = getattr(self, name)
            if not 0 <= value < 1:
                msg = f"{name} must lie in [0, 1), not {value!r}"
                raise ConfigError(msg)

    def _check_files(self, *names: str) -> None:
        for name in names:
            path = getattr(self, name)
            if not path:
                msg = f"a {self.kind} dataset needs {name!r}"
                raise ConfigError(msg)
            if not os.path.isfile(path):
                msg = f"{name}: no such file {path!r}"
                raise ConfigError(msg)

    def load(self) -> Dataset:
        """
        Read or generate the data, split it, and preprocess it with
        statistics from the train split.
        """
        if self.kind == "synth":
            ds = synth(self.synth, self.n, self.length, self.noise, self.seed)
        elif self.kind == "ts":
            assert self.train is not None
            assert self.test is not None
            ds = load_uea(self.train, self.test)
        else:
            assert self.path is not None
            ds = parse_csv(self.path, self.csv)

        ds = split_dataset(
            ds, self.val_fraction, self.test_fraction, self.split_seed
        )

        return preprocess(ds, self.preprocess)


@dataclass(frozen=True)
class ModelSpec:
    """
    Everything of a `ModelConfig` except what the data decides: the input
    channels and the number of classes.
    """

    v: int = 16
    d: int = 32
    field: str = "jacobian-truncated"
    solver: SolverConfig = dataclasses.field(default_factory=SolverConfig)
    surrogate: SurrogateConfig = dataclasses.field(
        default_factory=SurrogateConfig
    )
    interpolation: str = "natural-cubic"

    def __post_init__(self) -> None:
        for name in ("v", "d"):
            _expect_number("model", name, getattr(self, name), int)
            if getattr(self, name) < 1:
                msg = f"{name} must be positive, not {getattr(self, name)!r}"
                raise ConfigError(msg)
        if self.field not in FIELD_KINDS:
            msg = f"field must be one of {FIELD_KINDS}, not {self.field!r}"
            raise ConfigError(msg)
        if self.interpolation not in INTERPOLATION_KINDS:
            msg = f"interpolation must be one of {INTERPOLATION_KINDS}, not {self.interpolation!r}"
            raise ConfigError(msg)

    def build(self, u: int, classes: int) -> ModelConfig:
        return ModelConfig(
            u=u,
            v=self.v,
            d=self.d,
            field=self.field,
            classes=classes,
            solver=self.solver,
            surrogate=self.surrogate,
            interpolation=self.interpolation,
        )


@dataclass(frozen=True)
class TrainingSpec:
    epochs: int = 30
    batch: int = 32
    lr: float = 1e-3

    def __post_init__(self) -> None:
        _expect_number("training", "epochs", self.epochs, int)
        _expect_number("training", "batch", self.batch, int)
        _expect_number("training", "lr", self.lr, float)
        if self.epochs < 0 or self.batch < 1 or self.lr < 0:
            msg = (
                "need epochs >= 0, batch >= 1 and lr >= 0, got "
                f"{self.epochs}, {self.batch}, {self.lr}"
            )
            raise ConfigError(msg)


@dataclass(frozen=True)
class OutputSpec:
    """
    *dir* is the output root; `None` defers to `default_out`.
    """

    dir: str | None = None


@dataclass(frozen=True)
class PrecisionSpec:
    dtype: str = "float64"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.dtype not in _DTYPES:
            msg = f"dtype must be one of {sorted(_DTYPES)}, not {self.dtype!r}"
            raise ConfigError(msg)
        _expect_number("precision", "workers", self.workers, int)
        if self.workers < 1:
            msg = f"workers must be at least 1, not {self.workers!r}"
            raise ConfigError(msg)

    def apply(self) -> None:
        """
        Make these the global defaults via `jacncde.configure`.
        """
        configure(dtype=self.dtype, workers=self.workers)


_SECTIONS = ("dataset", "model", "training", "output", "seeds", "precision")


@dataclass(frozen=True)
class RunConfig:
    """
    A fully validated run configuration.
    """

    dataset: DatasetSpec = dataclasses.field(default_factory=DatasetSpec)
    model: ModelSpec = dataclasses.field(default_factory=ModelSpec)
    training: TrainingSpec = dataclasses.field(default_factory=TrainingSpec)
    output: OutputSpec = dataclasses.field(default_factory=OutputSpec)
    seeds: tuple[int, ...] = (0,)
    precision: PrecisionSpec = dataclasses.field(default_factory=PrecisionSpec)

    def __post_init__(self) -> None:
        if not self.seeds:
            msg = "seeds: need at least one seed"
            raise ConfigError(msg)
        for s in self.seeds:
            _expect_number("seeds", str(s), s, int)

    @classmethod
    def from_dict(cls, raw: Any) -> RunConfig:
        """
        Raises:
            ConfigError: For unknown sections or keys and invalid values.
        """
        if not isinstance(raw, Mapping):
            msg = "run configuration must be a JSON object"
            raise ConfigError(msg)
        unknown = sorted(set(raw) - set(_SECTIONS))
        if unknown:
            msg = f"unknown section(s) {unknown}; known: {list(_SECTIONS)}"
            raise ConfigError(msg)

        seeds = raw.get("seeds", [0])
        if isinstance(seeds, int) and not isinstance(seeds, bool):
            seeds = [seeds]
        if not isinstance(seeds, Sequence) or isinstance(seeds, str):
            msg = f"seeds: expected a list of integers, got {seeds!r}"
            raise ConfigError(msg)

        return cls(
            dataset=_build(
                DatasetSpec,
                "dataset",
                raw.get("dataset"),
                {"csv": CsvSchema, "preprocess": PreprocessOptions},
            ),
            model=_build(
                ModelSpec,
                "model",
                raw.get("model"),
                {"solver": SolverConfig, "surrogate": SurrogateConfig},
            ),
            training=_build(TrainingSpec, "training", raw.get("training")),
            output=_build(OutputSpec, "output", raw.get("output")),
            seeds=tuple(seeds),
            precision=_build(PrecisionSpec, "precision", raw.get("precision")),
        )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @property
    def config_hash(self) -> str:
        """
        sha256 of the canonical JSON of the resolved configuration.
        """
        return config_hash(self.to_dict())

    @property
    def out_dir(self) -> str:
        return self.output.dir or default_out()

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        field: str | None = None,
        out: str | None = None,
    ) -> RunConfig:
        """
        Apply command line overrides; the result is validated again.
        """
        rv = self
        if seed is not None:
            rv = replace(rv, seeds=(seed,))
        if field is not None:
            rv = replace(rv, model=replace(rv.model, field=field))
        if out is not None:
            rv = replace(rv, output=OutputSpec(out))

        return rv


def load_run_config(path: str | os.PathLike[str] | None) -> RunConfig:
    """
    Load and validate the run configuration at *path*, or the defaults if
    *path* is `None`.

    Raises:
        ConfigError: If the file is missing, not JSON, or invalid.
    """
    if path is None:
        return RunConfig()

    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        msg = f"no such config file {os.fspath(path)!r}"
        raise ConfigError(msg) from None
    except json.JSONDecodeError as e:
        msg = f"config is not valid JSON: {e.msg} (line {e.lineno})"
        raise ConfigError(msg) from None

    return RunConfig.from_dict(raw)
