# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
Numerical oracles to test differentiable code against.

Used by the test suite and by ``jacncde verify``.
"""

from __future__ import annotations

import math

from contextlib import contextmanager
from typing import Any, Callable, Generator, NamedTuple, Sequence, TypeVar

import numpy as np

from . import fields
from ._config import _CONFIG, configure, get_config
from .autodiff import Tape, Var
from .exceptions import NumericError
from .typing import Tensor


__all__ = [
    "GradCheckResult",
    "configured",
    "convergence_slope",
    "corrupt_jvp_sign",
    "draw_away_from_kinks",
    "finite_difference_jacobian",
    "grad_check",
]

T = TypeVar("T")

KINK_TOLERANCE = 1e-3
"""
One-sided differences that disagree by more than this (relative to their
size) mean the stencil straddles a kink.
"""


class GradCheckResult(NamedTuple):
    """
    :ivar float max_rel_err: Worst relative error over the checked entries.
    :ivar int excluded: Entries skipped because they sit on a kink.
    :ivar int checked: Entries compared.
    """

    max_rel_err: float
    excluded: int
    checked: int


def _scalar(out: Var) -> float:
    value = float(np.asarray(out.value).reshape(()))
    if not math.isfinite(value):
        msg = "function under check is not finite"
        raise NumericError(msg, {"value": value})

    return value


def grad_check(
    f: Callable[[Tape, list[Var]], Var],
    leaves: Sequence[Any],
    eps: float = 1e-5,
    floor: float = 1e-12,
) -> GradCheckResult:
    """
    Compare the tape gradient of *f* with central differences.

    *f* receives a fresh tape and one leaf per entry of *leaves* and must
    return a scalar `Var`.  For every entry the relative error is
    ``|analytic - central| / (|central| + floor)``.

    Raises:
        NumericError: If *f* isn't finite at some evaluation point.
    """
    xs = [np.array(x, dtype=np.float64) for x in leaves]

    tape = Tape()
    vs = [tape.leaf(x) for x in xs]
    out = f(tape, vs)
    f0 = _scalar(out)
    tape.backward(out)
    analytic = [tape.grad(v) for v in vs]

    def at(i: int, x: Tensor) -> float:
        t = Tape()
        args = [t.leaf(x if j == i else xs[j]) for j in range(len(xs))]
        return _scalar(f(t, args))

    worst = 0.0
    excluded = 0
    checked = 0
    for i, x in enumerate(xs):
        for idx in np.ndindex(x.shape):
            plus = x.copy()
            plus[idx] += eps
            minus = x.copy()
            minus[idx] -= eps
            fp = at(i, plus)
            fm = at(i, minus)

            right = (fp - f0) / eps
            left = (f0 - fm) / eps
            if abs(right - left) > KINK_TOLERANCE * max(
                1.0, abs(right), abs(left)
            ):
                excluded += 1
                continue

            central = (fp - fm) / (2 * eps)
            a = float(analytic[i][idx])
            worst = max(worst, abs(a - central) / (abs(central) + floor))
            checked += 1

    return GradCheckResult(worst, excluded, checked)


def finite_difference_jacobian(
    g: Callable[[Tensor], Any], x: Any, eps: float = 1e-5
) -> Tensor:
    """
    Central-difference Jacobian of the vector function *g* at the vector *x*,
    one column per entry of *x*.
    """
    x = np.array(x, dtype=np.float64)
    cols = []
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = eps
        cols.append(
            (
                np.asarray(g(x + e), dtype=np.float64)
                - np.asarray(g(x - e), dtype=np.float64)
            )
            / (2 * eps)
        )

    return np.stack(cols, axis=1)


def convergence_slope(
    scales: Sequence[float], errors: Sequence[float]
) -> float:
    """
    Least-squares slope of ``log(errors)`` against ``log(scales)``.
    """
    return float(np.polyfit(np.log(scales), np.log(errors), 1)[0])


def draw_away_from_kinks(
    draw: Callable[[np.random.Generator], T],
    margin: Callable[[T], float],
    rng: np.random.Generator,
    min_margin: float = KINK_TOLERANCE,
    tries: int = 200,
) -> T:
    """
    Call *draw* until *margin* of the result exceeds *min_margin*.

    Raises:
        NumericError: If *tries* draws all land too close to a kink.
    """
    for _ in range(tries):
        candidate = draw(rng)
        if margin(candidate) > min_margin:
            return candidate

    msg = "couldn't draw parameters away from ReLU kinks"
    raise NumericError(msg, {"tries": tries, "min_margin": min_margin})


@contextmanager
def corrupt_jvp_sign() -> Generator[None, None, None]:
    """
    Context manager that flips the sign of every Jacobian-vector product.

    A seeded fault: the Jacobian checks of ``jacncde verify`` must catch it.

    Attention: this is **not** thread-safe!
    """
    old = fields._JVP_SIGN
    try:
        fields._JVP_SIGN = -old
        yield
    finally:
        fields._JVP_SIGN = old


@contextmanager
def configured(**kw: Any) -> Generator[None, None, None]:
    """
    Context manager that applies ``jacncde.configure(**kw)`` and restores the
    previous configuration on exit.

    Attention: this is **not** thread-safe!
    """
    old = get_config()
    was_configured = _CONFIG.is_configured
    try:
        configure(**kw)
        yield
    finally:
        configure(
            dtype=old["dtype"],
            surrogate_mode=old["surrogate_mode"],
            surrogate_slope=old["surrogate_slope"],
            workers=old["workers"],
        )
        _CONFIG.is_configured = was_configured
