# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
Type information used throughout *jacncde*.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Any, Callable, Tuple

import numpy as np

from numpy.typing import NDArray


if TYPE_CHECKING:
    from .autodiff import Var


Tensor = NDArray[np.floating[Any]]
"""
A dense row-major real array.

Vectors are 1-D, matrices 2-D; rows of a matrix are independent samples
wherever a batch dimension makes sense.  Values held by a `Var` are
read-only.
"""

Labels = NDArray[np.integer[Any]]
"""
Integer class indices, one per row.
"""

VectorField = Callable[[float, "Var"], "Var"]
"""
The right-hand side ``F(t, h)`` handed to `jacncde.odesolver.integrate`.
"""

ControlEval = Tuple[Tensor, Tensor]
"""
``(X_t, Xdot_t)`` as returned by evaluating a `CubicPath`.
"""
