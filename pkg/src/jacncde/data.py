# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
Datasets: ingestion, synthetic generators, preprocessing, and splits.

Two on-disk formats are understood:

- the UEA/sktime ``.ts`` text layout (`parse_ts`, `write_ts`, `load_uea`),
- long-format CSV with one row per observation (`parse_csv`, `write_csv`).

Every sample keeps its own length and times; nothing is padded.
"""

from __future__ import annotations

import math
import os
import re

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import pandas as pd
import structlog

from ._utils import philox
from .exceptions import InputError, ParseError, ShapeError
from .interpolation import TimeSeriesSample
from .typing import Labels, Tensor


__all__ = [
    "SPLITS",
    "SYNTH_KINDS",
    "CsvSchema",
    "Dataset",
    "PreprocessOptions",
    "load_uea",
    "parse_csv",
    "parse_ts",
    "preprocess",
    "split_dataset",
    "synth",
    "write_csv",
    "write_ts",
]

logger = structlog.get_logger(__name__)

SPLITS = ("train", "val", "test")
SYNTH_KINDS = ("sine-freq", "spiral")


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Labeled, possibly unequal-length series.

    Args:
        samples: The series, all with the same channel count.

        class_names: Name of each dense class index.

        provenance: Free-form history: where it came from, what was done.

        splits:
            One of ``"train"``, ``"val"``, or ``"test"`` per sample, or `None`
            while unassigned.

    Raises:
        InputError:
            If channel counts differ, a label is out of range, or a split tag
            is unknown.
    """

    samples: tuple[TimeSeriesSample, ...]
    class_names: tuple[str, ...]
    provenance: str = ""
    splits: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if self.splits is not None:
            object.__setattr__(self, "splits", tuple(self.splits))

        if len({s.channels for s in self.samples}) > 1:
            msg = "all samples must have the same number of channels"
            raise InputError(msg)
        c = len(self.class_names)
        for i, s in enumerate(self.samples):
            if s.label is not None and not 0 <= s.label < c:
                msg = f"label {s.label} of sample {i} outside [0, {c})"
                raise InputError(msg)
        if self.splits is not None:
            if len(self.splits) != len(self.samples):
                msg = f"{len(self.splits)} split tags for {len(self.samples)} samples"
                raise InputError(msg)
            unknown = set(self.splits) - set(SPLITS)
            if unknown:
                msg = f"unknown split tag(s) {sorted(unknown)}"
                raise InputError(msg)

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented

        return (
            self.class_names == other.class_names
            and self.splits == other.splits
            and self.samples == other.samples
        )

    @property
    def channels(self) -> int:
        return self.samples[0].channels if self.samples else 0

    @property
    def classes(self) -> int:
        return len(self.class_names)

    @property
    def labels(self) -> Labels:
        return np.array(
            [-1 if s.label is None else s.label for s in self.samples],
            dtype=np.int64,
        )

    def indices(self, split: str) -> list[int]:
        """
        Positions of the samples tagged *split*.

        Raises:
            InputError: If the dataset hasn't been split yet.
        """
        if self.splits is None:
            msg = "dataset has not been split"
            raise InputError(msg)

        return [i for i, tag in enumerate(self.splits) if tag == split]

    def subset(self, split: str) -> list[TimeSeriesSample]:
        return [self.samples[i] for i in self.indices(split)]

    def _train_indices(self) -> list[int]:
        if self.splits is None:
            return list(range(len(self.samples)))

        return self.indices("train")


# .ts files

_BOOL = {"true": True, "false": False}
_IGNORED_TAGS = ("@equallength", "@serieslength", "@missing", "@targetlabel")
_PAIR = re.compile(r"\(([^(),]+),([^()]+)\)")


def _parse_bool(tokens: list[str], lineno: int) -> bool:
    if len(tokens) != 2 or tokens[1].lower() not in _BOOL:
        msg = f"{tokens[0]} needs a single true/false value"
        raise ParseError(msg, line=lineno)

    return _BOOL[tokens[1].lower()]


def _parse_floats(text: str, case: int, lineno: int) -> Tensor:
    try:
        return np.array([float(x) for x in text.split(",")], dtype=np.float64)
    except ValueError:
        msg = f"invalid number in {text[:40]!r}"
        raise ParseError(msg, line=lineno, case=case) from None


def _parse_case(
    line: str,
    *,
    case: int,
    lineno: int,
    dims: int | None,
    timestamps: bool,
    labels: dict[str, int] | None,
) -> TimeSeriesSample:
    parts = line.split(":")
    label = None
    if labels is not None:
        name = parts.pop().strip()
        if name not in labels:
            msg = f"unknown class label {name!r}"
            raise ParseError(msg, line=lineno, case=case)
        label = labels[name]
    if dims is not None and len(parts) != dims:
        msg = f"expected {dims} dimension(s), got {len(parts)}"
        raise ParseError(msg, line=lineno, case=case)

    if timestamps:
        columns = []
        times = None
        for part in parts:
            pairs = _PAIR.findall(part)
            if not pairs:
                msg = "expected (time,value) pairs"
                raise ParseError(msg, line=lineno, case=case)
            try:
                t = np.array([float(a) for a, _ in pairs])
                columns.append(np.array([float(b) for _, b in pairs]))
            except ValueError:
                msg = "invalid (time,value) pair"
                raise ParseError(msg, line=lineno, case=case) from None
            if times is not None and not np.array_equal(times, t):
                msg = "dimensions disagree on their time stamps"
                raise ParseError(msg, line=lineno, case=case)
            times = t
    else:
        columns = [
            _parse_floats(p, case, lineno) if p.strip() else np.empty(0)
            for p in parts
        ]
        times = np.arange(columns[0].shape[0], dtype=np.float64)

    if len({c.shape[0] for c in columns}) != 1:
        msg = "dimensions of one case must have equal length"
        raise ParseError(msg, line=lineno, case=case)

    try:
        return TimeSeriesSample(times, np.stack(columns, axis=1), label)
    except (InputError, ShapeError) as e:
        raise ParseError(str(e), line=lineno, case=case) from None


def parse_ts(path: str | os.PathLike[str]) -> Dataset:
    """
    Read a UEA/sktime ``.ts`` file.

    Header tags are case-insensitive.  ``@classLabel true a b ...`` maps the
    names to dense indices in the order given.  Without ``@timeStamps
    true``, a case of length *T* is observed at ``0, 1, ..., T - 1``.

    Raises:
        ParseError:
            For a malformed header (with the line number), a case with the
            wrong number of dimensions or an unknown label (with the case
            index), or a series with fewer than 2 observations.
    """
    dims: int | None = None
    timestamps = False
    labels: dict[str, int] | None = None
    names: tuple[str, ...] = ()
    problem = None
    in_data = False
    samples = []

    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue

            if in_data:
                samples.append(
                    _parse_case(
                        line,
                        case=len(samples),
                        lineno=lineno,
                        dims=dims,
                        timestamps=timestamps,
                        labels=labels,
                    )
                )
                if dims is None:
                    dims = samples[0].channels
                continue

            if not line.startswith("@"):
                msg = "expected a header tag or @data"
                raise ParseError(msg, line=lineno)

            tokens = line.split()
            tag = tokens[0].lower()
            if tag == "@data":
                if len(tokens) != 1:
                    msg = "@data takes no value"
                    raise ParseError(msg, line=lineno)
                in_data = True
            elif tag == "@problemname":
                if len(tokens) < 2:
                    msg = "@problemName needs a value"
                    raise ParseError(msg, line=lineno)
                problem = " ".join(tokens[1:])
            elif tag == "@timestamps":
                timestamps = _parse_bool(tokens, lineno)
            elif tag == "@univariate":
                if _parse_bool(tokens, lineno):
                    dims = 1
            elif tag == "@dimensions":
                if (
                    len(tokens) != 2
                    or not tokens[1].isdigit()
                    or int(tokens[1]) < 1
                ):
                    msg = "@dimensions needs a positive integer"
                    raise ParseError(msg, line=lineno)
                dims = int(tokens[1])
            elif tag == "@classlabel":
                if len(tokens) < 2 or tokens[1].lower() not in _BOOL:
                    msg = "@classLabel needs true/false"
                    raise ParseError(msg, line=lineno)
                if _BOOL[tokens[1].lower()]:
                    names = tuple(tokens[2:])
                    if not names or len(set(names)) != len(names):
                        msg = "@classLabel true needs distinct class names"
                        raise ParseError(msg, line=lineno)
                    labels = {n: i for i, n in enumerate(names)}
            elif tag in _IGNORED_TAGS:
                pass
            else:
                msg = f"unknown header tag {tokens[0]!r}"
                raise ParseError(msg, line=lineno)

    if not in_data:
        msg = "no @data section"
        raise ParseError(msg)

    logger.debug("ts_parsed", path=str(path), cases=len(samples))

    return Dataset(
        tuple(samples),
        names,
        provenance=f"ts:{problem or os.fspath(path)}",
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def _labeled(ds: Dataset) -> bool:
    """
    Whether *ds* is written with labels: all samples or none must have one.
    """
    unlabeled = sum(s.label is None for s in ds.samples)
    if 0 < unlabeled < len(ds):
        msg = f"{unlabeled} of {len(ds)} samples have no label; label all or none"
        raise InputError(msg)

    return bool(ds.class_names) and unlabeled == 0


def write_ts(
    ds: Dataset, path: str | os.PathLike[str], problem_name: str = "jacncde"
) -> None:
    """
    Write *ds* in the ``.ts`` layout that `parse_ts` reads.

    Time stamps are written only when some sample isn't observed at
    ``0, 1, ..., T - 1``.  Split tags are not part of the format, and
    ``@classLabel false`` is written if no sample has a label.

    Raises:
        InputError: If only some samples have a label.
    """
    stamped = any(
        not np.array_equal(s.times, np.arange(s.length)) for s in ds.samples
    )
    equal = len({s.length for s in ds.samples}) <= 1
    labeled = _labeled(ds)

    lines = [
        f"@problemName {problem_name}",
        f"@timeStamps {str(stamped).lower()}",
    ]
    if ds.channels == 1:
        lines.append("@univariate true")
    else:
        lines += ["@univariate false", f"@dimensions {ds.channels}"]
    lines.append(f"@equalLength {str(equal).lower()}")
    if labeled:
        lines.append("@classLabel true " + " ".join(ds.class_names))
    else:
        lines.append("@classLabel false")
    lines.append("@data")

    for s in ds.samples:
        if stamped:
            dims = [
                ",".join(
                    f"({_fmt(t)},{_fmt(x)})" for t, x in zip(s.times, col)
                )
                for col in s.values.T
            ]
        else:
            dims = [",".join(_fmt(x) for x in col) for col in s.values.T]
        if labeled:
            dims.append(ds.class_names[s.label])  # type: ignore[index]
        lines.append(":".join(dims))

    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_uea(
    train_path: str | os.PathLike[str], test_path: str | os.PathLike[str]
) -> Dataset:
    """
    Merge a ``_TRAIN``/``_TEST`` pair into one dataset whose test split is
    preassigned.

    Raises:
        ParseError: If the two files disagree on classes or channels.
    """
    train = parse_ts(train_path)
    test = parse_ts(test_path)
    if train.class_names != test.class_names:
        msg = f"class labels differ: {train.class_names} vs {test.class_names}"
        raise ParseError(msg)
    if train.channels != test.channels:
        msg = f"channel counts differ: {train.channels} vs {test.channels}"
        raise ParseError(msg)

    return Dataset(
        train.samples + test.samples,
        train.class_names,
        provenance=f"uea:{train.provenance[3:]}",
        splits=("train",) * len(train) + ("test",) * len(test),
    )


# CSV


@dataclass(frozen=True)
class CsvSchema:
    """
    Column names of a long-format CSV.

    If *channels* is `None`, every column that is neither id, time, nor label
    is a channel, in file order.
    """

    id_column: str = "series_id"
    time_column: str = "t"
    label_column: str | None = "label"
    channels: tuple[str, ...] | None = None


def parse_csv(
    path: str | os.PathLike[str], schema: CsvSchema | None = None
) -> Dataset:
    """
    Read one observation per row and group the rows into series.

    Series are ordered by id and each is sorted by time, so the row order in
    the file doesn't matter.  Class names are the sorted distinct labels.

    Raises:
        ParseError:
            For missing columns, rows with missing or extra fields, or a
            series whose label changes.

        InputError: For repeated times within one series.
    """
    schema = schema or CsvSchema()
    try:
        df = pd.read_csv(
            path,
            comment="#",
            float_precision="round_trip",
            dtype={schema.label_column: str} if schema.label_column else None,
        )
    except pd.errors.ParserError as e:
        raise ParseError(f"ragged rows: {e}") from None
    except pd.errors.EmptyDataError:
        raise ParseError("empty CSV file") from None

    fixed = [schema.id_column, schema.time_column]
    if schema.label_column:
        fixed.append(schema.label_column)
    channels = list(
        schema.channels or [c for c in df.columns if c not in fixed]
    )
    missing = [c for c in fixed + channels if c not in df.columns]
    if missing or not channels:
        msg = f"missing column(s) {missing or ['<channels>']}"
        raise ParseError(msg, line=1)

    bad = df[fixed + channels].isna().any(axis=1).to_numpy()
    if bad.any():
        # Header is line 1.
        msg = "row with missing fields"
        raise ParseError(msg, line=int(np.argmax(bad)) + 2)

    try:
        numeric = df[[schema.time_column, *channels]].astype(np.float64)
    except ValueError:
        msg = "non-numeric time or channel value"
        raise ParseError(msg) from None

    names: tuple[str, ...] = ()
    if schema.label_column:
        names = tuple(sorted(df[schema.label_column].unique()))
    index = {n: i for i, n in enumerate(names)}

    samples = []
    groups = df.groupby(schema.id_column, sort=True)
    for case, (sid, rows) in enumerate(groups):
        rows = rows.sort_values(schema.time_column, kind="stable")
        times = numeric.loc[rows.index, schema.time_column].to_numpy()
        if np.any(np.diff(times) == 0):
            msg = f"series {sid!r} repeats a time stamp"
            raise InputError(msg)

        label = None
        if schema.label_column:
            values = rows[schema.label_column].unique()
            if len(values) != 1:
                msg = f"series {sid!r} has more than one label"
                raise ParseError(msg, case=case)
            label = index[values[0]]

        try:
            samples.append(
                TimeSeriesSample(
                    times, numeric.loc[rows.index, channels].to_numpy(), label
                )
            )
        except InputError as e:
            raise ParseError(f"series {sid!r}: {e}", case=case) from None

    logger.debug("csv_parsed", path=str(path), series=len(samples))

    return Dataset(tuple(samples), names, provenance=f"csv:{os.fspath(path)}")


def write_csv(ds: Dataset, path: str | os.PathLike[str]) -> None:
    """
    Write *ds* as long-format CSV with columns ``series_id, t, c_1 ... c_u,
    label``.  The label column is left out if no sample has a label.

    Raises:
        InputError: If only some samples have a label.
    """
    labeled = _labeled(ds)
    cols = [f"c_{i + 1}" for i in range(ds.channels)]
    frames = []
    for i, s in enumerate(ds.samples):
        frame = pd.DataFrame(s.values, columns=cols)
        frame.insert(0, "t", s.times)
        frame.insert(0, "series_id", i)
        if labeled:
            frame["label"] = ds.class_names[s.label]  # type: ignore[index]
        frames.append(frame)

    pd.concat(frames, ignore_index=True).to_csv(path, index=False)


# Synthetic data


def synth(
    kind: str, n: int, T: int, noise: float = 0.0, seed: int = 0
) -> Dataset:
    """
    Generate a balanced two-class dataset.

    ``"sine-freq"``
        One channel ``sin(2 pi f t)`` on ``t = linspace(0, 1, T)`` with
        ``f = 1`` for class 0 and ``f = 2`` for class 1.

    ``"spiral"``
        Two channels tracing an outward spiral from a random start angle,
        clockwise for class 0, counterclockwise for class 1.

    Gaussian *noise* of that standard deviation is added to every value.  The
    result depends on *seed* only; seeds are taken modulo 2**64.

    Raises:
        InputError:
            For an unknown *kind*, *n* or *T* below 2, or a negative or
            non-finite *noise*.
    """
    if kind not in SYNTH_KINDS:
        msg = f"synthetic kind must be one of {SYNTH_KINDS}, not {kind!r}"
        raise InputError(msg)
    if n < 2 or T < 2:
        msg = f"need n >= 2 and T >= 2, got n={n}, T={T}"
        raise InputError(msg)
    if not (math.isfinite(noise) and noise >= 0):
        msg = f"noise must be finite and non-negative, not {noise!r}"
        raise InputError(msg)

    rng = philox(seed)
    labels = rng.permutation(np.arange(n) % 2)
    t = np.linspace(0.0, 1.0, T)

    samples = []
    for y in labels:
        if kind == "sine-freq":
            clean = np.sin(2 * math.pi * (y + 1) * t)[:, None]
        else:
            direction = -1.0 if y == 0 else 1.0
            theta = rng.uniform(0, 2 * math.pi) + direction * 3 * math.pi * t
            r = 0.2 + 0.8 * t
            clean = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        values = clean + noise * rng.standard_normal(clean.shape)
        samples.append(TimeSeriesSample(t, values, int(y)))

    names = (
        ("class0", "class1")
        if kind == "sine-freq"
        else ("clockwise", "counterclockwise")
    )

    return Dataset(
        tuple(samples),
        names,
        provenance=f"synth:{kind} n={n} T={T} noise={noise} seed={seed}",
    )


# Preprocessing and splits


@dataclass(frozen=True)
class PreprocessOptions:
    """
    Args:
        rescale_time:
            Map times affinely so the train split spans ``[0, 1]``.

        append_time: Add the (rescaled) time as the last channel.

        normalize:
            Standardize every channel with train-split mean and standard
            deviation.  A channel without variance is only centered.
    """

    rescale_time: bool = True
    append_time: bool = True
    normalize: bool = True


def _span(samples: Sequence[TimeSeriesSample]) -> tuple[float, float]:
    start = min(float(s.times[0]) for s in samples)
    end = max(float(s.times[-1]) for s in samples)

    return start, end


def preprocess(
    ds: Dataset, options: PreprocessOptions | None = None
) -> Dataset:
    """
    Rescale times, append the time channel, then normalize channels, in
    that order.

    Statistics come from the train split (all samples if unsplit).  Neither
    lengths nor labels change.
    """
    options = options or PreprocessOptions()
    ref = ds._train_indices()
    if not ref:
        msg = "no training samples to derive preprocessing statistics from"
        raise InputError(msg)
    notes = []

    times = [s.times for s in ds.samples]
    values = [s.values for s in ds.samples]

    if options.rescale_time:
        start, end = _span([ds.samples[i] for i in ref])
        times = [(t - start) / (end - start) for t in times]
        notes.append(f"time=[{start!r},{end!r}]->[0,1]")
    if options.append_time:
        values = [
            np.concatenate([v, t[:, None]], axis=1)
            for t, v in zip(times, values)
        ]
        notes.append("append_time")
    if options.normalize:
        stacked = np.concatenate([values[i] for i in ref], axis=0)
        mean = stacked.mean(axis=0)
        std = stacked.std(axis=0)
        flat = std < 1e-12
        scale = np.where(flat, 1.0, std)
        values = [(v - mean) / scale for v in values]
        notes.append(f"normalize mean={mean.tolist()!r} std={std.tolist()!r}")
        if flat.any():
            zero = np.flatnonzero(flat).tolist()
            notes.append(f"warning: zero variance channel(s) {zero} centered only")
            logger.warning("zero_variance_channel", channels=zero)

    samples = tuple(
        TimeSeriesSample(t, v, s.label)
        for s, t, v in zip(ds.samples, times, values)
    )

    return replace(
        ds,
        samples=samples,
        provenance=f"{ds.provenance}; preprocess: {', '.join(notes) or 'none'}",
    )


def split_dataset(
    ds: Dataset,
    val_fraction: float = 0.15,
    test_fraction: float = 0.2,
    seed: int = 0,
) -> Dataset:
    """
    Assign stratified train/validation/test tags.

    A preassigned test split (as from `load_uea`) is kept and the validation
    split is carved out of the rest.  Per class, ``round(test_fraction * n)``
    samples go to test and ``round(val_fraction * rest)`` to validation.

    Raises:
        InputError: For unlabeled samples or fractions outside ``[0, 1)``.
    """
    if not (0 <= val_fraction < 1 and 0 <= test_fraction < 1):
        msg = f"fractions must lie in [0, 1), got val={val_fraction}, test={test_fraction}"
        raise InputError(msg)
    labels = ds.labels
    if np.any(labels < 0):
        msg = "can't stratify unlabeled samples"
        raise InputError(msg)

    rng = philox(seed)
    preset = ds.splits is not None and "test" in ds.splits
    tags = list(ds.splits) if preset and ds.splits else ["train"] * len(ds)

    for c in range(ds.classes):
        members = [
            i for i in range(len(ds)) if labels[i] == c and tags[i] != "test"
        ]
        members = [members[i] for i in rng.permutation(len(members))]
        n_test = 0 if preset else round(test_fraction * len(members))
        n_val = round(val_fraction * (len(members) - n_test))
        for i in members[:n_test]:
            tags[i] = "test"
        for i in members[n_test : n_test + n_val]:
            tags[i] = "val"
        for i in members[n_test + n_val :]:
            tags[i] = "train"

    return replace(ds, splits=tuple(tags))
