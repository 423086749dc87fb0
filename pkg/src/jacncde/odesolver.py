# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
Fixed-step integration of ``dh/dt = F(t, h)`` over a knot grid.

Every stage is an ordinary tape operation, so training differentiates the
discrete solver itself instead of solving an adjoint equation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .autodiff import Var, add, scale
from .exceptions import ConfigError, InputError, NumericError
from .typing import Tensor, VectorField


__all__ = ["SOLVER_METHODS", "Solution", "SolverConfig", "integrate"]

SOLVER_METHODS = ("euler", "rk4")


@dataclass(frozen=True)
class SolverConfig:
    """
    Args:
        method: ``"rk4"`` (default) or ``"euler"``.

        steps_per_interval:
            Equal substeps between two consecutive knots, so that steps
            never straddle an interpolation piece.

        record_trajectory: Keep the state after every substep.
    """

    method: str = "rk4"
    steps_per_interval: int = 1
    record_trajectory: bool = False

    def __post_init__(self) -> None:
        if self.method not in SOLVER_METHODS:
            msg = f"solver method must be one of {SOLVER_METHODS}, not {self.method!r}"
            raise ConfigError(msg)
        if self.steps_per_interval < 1:
            msg = f"steps_per_interval must be at least 1, not {self.steps_per_interval!r}"
            raise ConfigError(msg)


class Solution(NamedTuple):
    final: Var
    trajectory: tuple[Var, ...] | None = None
    times: Tensor | None = None


def _euler_step(field: VectorField, t: float, h: Var, dt: float) -> Var:
    return add(h, scale(field(t, h), dt))


def _rk4_step(field: VectorField, t: float, h: Var, dt: float) -> Var:
    half = dt / 2
    k1 = field(t, h)
    k2 = field(t + half, add(h, scale(k1, half)))
    k3 = field(t + half, add(h, scale(k2, half)))
    k4 = field(t + dt, add(h, scale(k3, dt)))

    incr = add(add(k1, scale(add(k2, k3), 2.0)), k4)

    return add(h, scale(incr, dt / 6))


_STEPPERS = {"euler": _euler_step, "rk4": _rk4_step}


def integrate(
    field: VectorField,
    h0: Var,
    grid: Sequence[float] | Tensor,
    cfg: SolverConfig | None = None,
) -> Solution:
    """
    Integrate *field* from ``grid[0]`` to ``grid[-1]`` starting at *h0*.

    Args:
        field: ``F(t, h)``, returning a `Var` shaped like *h*.

        h0: Initial state.  Rows are independent samples if it's a matrix.

        grid: Strictly increasing knot times.

        cfg: Stepper settings, defaults to one RK4 step per knot interval.

    Raises:
        InputError: If *grid* isn't strictly increasing.

        NumericError:
            If the state stops being finite.  The context holds the global
            step index and the time reached.
    """
    cfg = cfg or SolverConfig()
    knots = np.asarray(grid, dtype=np.float64)
    if knots.ndim != 1 or knots.shape[0] < 2 or np.any(np.diff(knots) <= 0):
        msg = "integration grid must hold at least 2 strictly increasing times"
        raise InputError(msg)

    step = _STEPPERS[cfg.method]
    n = cfg.steps_per_interval
    h = h0
    trajectory = [h0] if cfg.record_trajectory else None
    times = [knots[0]] if cfg.record_trajectory else None

    k = 0
    for t0, t1 in zip(knots[:-1], knots[1:]):
        dt = (t1 - t0) / n
        for j in range(n):
            t = t0 + j * dt
            h = step(field, float(t), h, float(dt))
            k += 1
            if not np.all(np.isfinite(h.value)):
                msg = "hidden state became non-finite"
                raise NumericError(msg, {"step": k, "t": float(t + dt)})
            if trajectory is not None and times is not None:
                trajectory.append(h)
                times.append(t + dt)

    return Solution(
        h,
        tuple(trajectory) if trajectory is not None else None,
        np.asarray(times) if times is not None else None,
    )
