# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

import numpy as np
import pytest

from jacncde._linalg import gauss_solve
from jacncde.exceptions import NumericError, ShapeError


class TestGaussSolve:
    def test_solves(self, rng):
        """
        Random well-conditioned systems are solved to round-off.
        """
        a = rng.normal(size=(6, 6)) + 6 * np.eye(6)
        x = rng.normal(size=6)

        assert np.allclose(x, gauss_solve(a, a @ x), atol=1e-12)

    def test_needs_pivoting(self):
        """
        A zero on the diagonal is handled by swapping rows.
        """
        a = np.array([[0.0, 1.0], [1.0, 0.0]])

        assert [2.0, 1.0] == gauss_solve(a, np.array([1.0, 2.0])).tolist()

    def test_inputs_untouched(self, rng):
        """
        Neither the matrix nor the right-hand side is modified.
        """
        a = rng.normal(size=(3, 3)) + 3 * np.eye(3)
        b = rng.normal(size=3)
        a0, b0 = a.copy(), b.copy()

        gauss_solve(a, b)

        assert (a0 == a).all()
        assert (b0 == b).all()

    def test_singular(self):
        """
        Singular matrices raise NumericError naming the failing column.
        """
        a = np.array([[1.0, 2.0], [2.0, 4.0]])

        with pytest.raises(NumericError) as ei:
            gauss_solve(a, np.array([1.0, 1.0]))

        assert 1 == ei.value.context["column"]

    def test_residual(self):
        """
        A residual that reaches the tolerance raises NumericError.
        """
        with pytest.raises(NumericError, match="residual") as ei:
            gauss_solve(np.eye(2), np.array([1.0, 2.0]), residual_tol=0.0)

        assert 0.0 == ei.value.context["residual"]

    @pytest.mark.parametrize(
        ("a", "b"), [((2, 3), (2,)), ((3, 3), (2,)), ((2, 2), (2, 1))]
    )
    def test_shapes(self, a, b):
        """
        Non-square matrices and mismatched right-hand sides raise ShapeError.
        """
        with pytest.raises(ShapeError):
            gauss_solve(np.eye(*a), np.zeros(b))
