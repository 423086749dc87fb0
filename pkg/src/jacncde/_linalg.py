# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
Small dense linear solves for the exact-inverse field.

Systems are at most hidden-size square, so plain elimination is fine.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NumericError, ShapeError
from .typing import Tensor


PIVOT_TOLERANCE = 1e-12
RESIDUAL_TOLERANCE = 1e-8


def gauss_solve(
    a: Tensor,
    b: Tensor,
    *,
    pivot_tol: float = PIVOT_TOLERANCE,
    residual_tol: float = RESIDUAL_TOLERANCE,
) -> Tensor:
    """
    Solve ``a @ x == b`` by Gaussian elimination with partial pivoting.

    The inputs are not modified.

    Raises:
        ShapeError: If *a* isn't square or *b* doesn't match it.

        NumericError:
            If a pivot is smaller than *pivot_tol* in magnitude or the
            residual ``max |a @ x - b|`` reaches *residual_tol*.
    """
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n or b.shape != (n,):
        msg = f"can't solve a system of shape {a.shape} for a right-hand side of shape {b.shape}"
        raise ShapeError(msg)

    m = np.array(a, dtype=np.float64)
    x = np.array(b, dtype=np.float64)

    for k in range(n):
        p = int(np.argmax(np.abs(m[k:, k]))) + k
        if abs(m[p, k]) < pivot_tol:
            msg = "matrix is singular or ill-conditioned"
            raise NumericError(msg, {"column": k, "pivot": float(m[p, k])})
        if p != k:
            m[[k, p]] = m[[p, k]]
            x[[k, p]] = x[[p, k]]

        lam = m[k + 1 :, k] / m[k, k]
        m[k + 1 :, k:] -= lam[:, None] * m[k, k:]
        x[k + 1 :] -= lam * x[k]

    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - m[k, k + 1 :] @ x[k + 1 :]) / m[k, k]

    residual = float(np.max(np.abs(a @ x - b))) if n else 0.0
    if not residual < residual_tol:
        msg = "linear solve residual too large"
        raise NumericError(msg, {"residual": residual})

    return x
