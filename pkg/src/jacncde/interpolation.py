# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
Continuous control paths fitted through discrete time series.

Coefficients are plain arrays, never tape values: gradients don't flow into
the data path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .exceptions import InputError, ShapeError
from .typing import ControlEval, Tensor


__all__ = [
    "INTERPOLATION_KINDS",
    "CubicPath",
    "TimeSeriesSample",
    "eval_path",
    "fit",
]

INTERPOLATION_KINDS = ("natural-cubic", "hermite")


def _check_times(times: Tensor) -> None:
    if times.ndim != 1 or times.shape[0] < 2:
        msg = f"a series needs at least 2 observations, got {times.shape[0] if times.ndim else 0}"
        raise InputError(msg)
    if not np.all(np.isfinite(times)):
        msg = "observation times must be finite"
        raise InputError(msg)
    if np.any(np.diff(times) <= 0):
        i = int(np.argmax(np.diff(times) <= 0))
        msg = (
            "observation times must be strictly increasing, "
            f"got {times[i]!r} followed by {times[i + 1]!r}"
        )
        raise InputError(msg)


@dataclass(frozen=True, eq=False)
class TimeSeriesSample:
    """
    One observed series.

    Args:
        times: Strictly increasing observation times, length *T* ≥ 2.

        values: *T*×*u* observations.

        label: Dense class index, or `None` for unlabeled data.

    Raises:
        InputError: If *times* is too short or not strictly increasing.

        ShapeError: If *values* doesn't have one row per time.
    """

    times: Tensor
    values: Tensor
    label: int | None = None

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]

        _check_times(times)
        if values.ndim != 2 or values.shape[0] != times.shape[0]:
            msg = f"values of shape {values.shape} don't match {times.shape[0]} times"
            raise ShapeError(msg)

        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def length(self) -> int:
        return self.times.shape[0]  # type: ignore[no-any-return]

    @property
    def channels(self) -> int:
        return self.values.shape[1]  # type: ignore[no-any-return]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeSeriesSample):
            return NotImplemented

        return (
            self.label == other.label
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class CubicPath:
    """
    A piecewise cubic through the observations of one (or a stack of) series.

    On piece *i*, channel *c*: ``X(t) = a + b*s + c*s**2 + d*s**3`` with
    ``s = t - knots[i]`` and ``coeffs[..., i, c, :] == (a, b, c, d)``.

    Outside ``[knots[0], knots[-1]]`` the path continues linearly with the
    derivative of the boundary piece.

    Call it with a time to get ``(X_t, Xdot_t)``.
    """

    knots: Tensor
    coeffs: Tensor
    kind: str = "natural-cubic"

    @property
    def channels(self) -> int:
        return self.coeffs.shape[-2]  # type: ignore[no-any-return]

    @property
    def batched(self) -> bool:
        return self.coeffs.ndim == 4  # type: ignore[no-any-return]

    @classmethod
    def stack(cls, paths: Sequence[CubicPath]) -> CubicPath:
        """
        Combine paths that share their knots into one batched path whose
        evaluations have one row per path.

        Raises:
            InputError: If the knots differ.
        """
        if not paths:
            msg = "can't stack zero paths"
            raise InputError(msg)
        first = paths[0]
        for p in paths[1:]:
            if p.kind != first.kind or not np.array_equal(
                p.knots, first.knots
            ):
                msg = "only paths with identical knots and kind can be stacked"
                raise InputError(msg)

        coeffs = np.stack([p.coeffs for p in paths])
        coeffs.flags.writeable = False

        return cls(first.knots, coeffs, first.kind)

    def __call__(self, t: float) -> ControlEval:
        return eval_path(self, t)

    def second_derivative(self, t: float, *, side: str = "right") -> Tensor:
        """
        ``X''(t)`` from the piece to the left or the right of *t*.

        Zero outside the knots.
        """
        knots = self.knots
        if t < knots[0] or t > knots[-1]:
            return np.zeros(self.coeffs.shape[:-3] + (self.channels,))
        i = _piece(knots, t, side)
        c = self.coeffs[..., i, :, :]
        s = t - knots[i]

        return 2 * c[..., 2] + 6 * c[..., 3] * s  # type: ignore[no-any-return]


def _piece(knots: Tensor, t: float, side: str = "right") -> int:
    i = int(np.searchsorted(knots, t, side=side)) - 1  # type: ignore[call-overload]

    return min(max(i, 0), knots.shape[0] - 2)


def _natural_second_derivatives(times: Tensor, y: Tensor) -> Tensor:
    """
    Solve the tridiagonal system for knot second derivatives ``M`` with
    ``M[0] == M[-1] == 0``.

    Forward elimination then back-substitution, all channels at once.
    """
    n = times.shape[0]
    m = np.zeros_like(y)
    if n < 3:
        return m

    h = np.diff(times)
    slope = np.diff(y, axis=0) / h[:, None]
    diag = np.empty(n)
    rhs = np.zeros_like(y)

    diag[1] = 2.0 * (h[0] + h[1])
    rhs[1] = 6.0 * (slope[1] - slope[0])
    for i in range(2, n - 1):
        w = h[i - 1] / diag[i - 1]
        diag[i] = 2.0 * (h[i - 1] + h[i]) - w * h[i - 1]
        rhs[i] = 6.0 * (slope[i] - slope[i - 1]) - w * rhs[i - 1]

    for i in range(n - 2, 0, -1):
        m[i] = (rhs[i] - h[i] * m[i + 1]) / diag[i]

    return m


def _natural_coeffs(times: Tensor, y: Tensor) -> Tensor:
    h = np.diff(times)[:, None]
    m = _natural_second_derivatives(times, y)
    coeffs = np.empty((times.shape[0] - 1, y.shape[1], 4))
    coeffs[..., 0] = y[:-1]
    coeffs[..., 1] = np.diff(y, axis=0) / h - h * (2 * m[:-1] + m[1:]) / 6
    coeffs[..., 2] = m[:-1] / 2
    coeffs[..., 3] = np.diff(m, axis=0) / (6 * h)

    return coeffs


def _hermite_coeffs(times: Tensor, y: Tensor) -> Tensor:
    """
    Cubic Hermite pieces with Catmull-Rom knot slopes; the end slopes are the
    one-sided differences.
    """
    h = np.diff(times)[:, None]
    delta = np.diff(y, axis=0) / h

    slopes = np.empty_like(y)
    slopes[0] = delta[0]
    slopes[-1] = delta[-1]
    slopes[1:-1] = (y[2:] - y[:-2]) / (times[2:] - times[:-2])[:, None]

    coeffs = np.empty((times.shape[0] - 1, y.shape[1], 4))
    coeffs[..., 0] = y[:-1]
    coeffs[..., 1] = slopes[:-1]
    coeffs[..., 2] = (3 * delta - 2 * slopes[:-1] - slopes[1:]) / h
    coeffs[..., 3] = (slopes[:-1] + slopes[1:] - 2 * delta) / (h * h)

    return coeffs


def fit(sample: TimeSeriesSample, kind: str = "natural-cubic") -> CubicPath:
    """
    Fit a `CubicPath` through *sample*.

    Args:
        sample: The observations.

        kind:
            ``"natural-cubic"`` for a C² spline with zero curvature at both
            ends, ``"hermite"`` for a C¹ Catmull-Rom spline.

    Raises:
        InputError: For an unknown *kind*.
    """
    if kind == "natural-cubic":
        coeffs = _natural_coeffs(sample.times, sample.values)
    elif kind == "hermite":
        coeffs = _hermite_coeffs(sample.times, sample.values)
    else:
        msg = f"interpolation kind must be one of {INTERPOLATION_KINDS}, not {kind!r}"
        raise InputError(msg)

    coeffs.flags.writeable = False

    return CubicPath(sample.times, coeffs, kind)


def eval_path(path: CubicPath, t: Any) -> ControlEval:
    """
    Evaluate *path* and its time derivative at the single time *t*.

    Knots belong to the piece on their right, except the last one.
    """
    knots = path.knots
    t = float(t)
    if t < knots[0]:
        x, xdot = eval_path(path, knots[0])
        return x + xdot * (t - knots[0]), xdot
    if t > knots[-1]:
        x, xdot = eval_path(path, knots[-1])
        return x + xdot * (t - knots[-1]), xdot

    i = _piece(knots, t)
    c = path.coeffs[..., i, :, :]
    s = t - knots[i]
    a, b, cc, d = c[..., 0], c[..., 1], c[..., 2], c[..., 3]

    return a + s * (b + s * (cc + s * d)), b + s * (2 * cc + 3 * s * d)
