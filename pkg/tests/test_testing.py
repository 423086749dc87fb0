# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

import numpy as np
import pretend
import pytest

from jacncde import fields
from jacncde._config import get_config, is_configured
from jacncde.autodiff import activation, mul_elem, sum_all
from jacncde.exceptions import ConfigError, NumericError
from jacncde.testing import (
    GradCheckResult,
    configured,
    convergence_slope,
    corrupt_jvp_sign,
    draw_away_from_kinks,
    finite_difference_jacobian,
    grad_check,
)


class TestGradCheck:
    def test_exact(self):
        """
        A correct gradient has a tiny relative error and every entry is
        checked.
        """
        res = grad_check(
            lambda tape, xs: sum_all(mul_elem(xs[0], xs[0])),
            [np.array([1.0, -2.0, 3.0])],
        )

        assert 3 == res.checked
        assert 0 == res.excluded
        assert res.max_rel_err < 1e-8

    def test_excludes_kinks(self):
        """
        Entries whose stencil straddles a ReLU kink are excluded, not
        compared.
        """
        res = grad_check(
            lambda tape, xs: sum_all(activation("relu", xs[0])),
            [np.array([0.0, 1.0, -1.0])],
        )

        assert isinstance(res, GradCheckResult)
        assert 1 == res.excluded
        assert 2 == res.checked
        assert res.max_rel_err < 1e-8

    def test_detects_wrong_gradient(self, monkeypatch):
        """
        A broken backward rule shows up as a large relative error.
        """
        from jacncde import autodiff

        monkeypatch.setitem(
            autodiff._VJPS, "tanh", lambda g, y: (g * (1 + y * y),)
        )

        res = grad_check(
            lambda tape, xs: sum_all(activation("tanh", xs[0])),
            [np.array([0.5, -1.0])],
        )

        assert res.max_rel_err > 0.1

    def test_non_finite(self):
        """
        A non-finite function value raises NumericError.
        """

        def f(tape, xs):
            return sum_all(xs[0] * np.inf)

        with pytest.raises(NumericError, match="not finite"):
            grad_check(f, [np.array([1.0])])

    def test_fresh_tape_per_evaluation(self):
        """
        Every evaluation of the function gets its own tape.
        """
        tapes = []

        def f(tape, xs):
            tapes.append(tape)
            return sum_all(xs[0])

        grad_check(f, [np.array([1.0, 2.0])])

        assert 5 == len(tapes)
        assert 5 == len({id(t) for t in tapes})


class TestFiniteDifferenceJacobian:
    def test_linear(self):
        """
        The Jacobian of a linear map is its matrix.
        """
        a = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])

        jac = finite_difference_jacobian(lambda x: a @ x, [0.3, -0.7])

        assert (3, 2) == jac.shape
        assert np.allclose(a, jac, atol=1e-9)


class TestConvergenceSlope:
    def test_power_law(self):
        """
        Errors following C * h**p give slope p.
        """
        hs = [0.1, 0.05, 0.025]

        assert pytest.approx(3.0) == convergence_slope(
            hs, [7 * h**3 for h in hs]
        )


class TestDrawAwayFromKinks:
    def test_redraws(self, rng):
        """
        Draws are repeated until the margin is large enough.
        """
        draws = iter([0.0, 1e-4, 0.5])
        draw = pretend.call_recorder(lambda r: next(draws))

        assert 0.5 == draw_away_from_kinks(draw, abs, rng)
        assert [pretend.call(rng)] * 3 == draw.calls

    def test_gives_up(self, rng):
        """
        After the given number of tries, NumericError is raised.
        """
        with pytest.raises(NumericError, match="couldn't draw") as ei:
            draw_away_from_kinks(lambda r: 0.0, abs, rng, tries=4)

        assert 4 == ei.value.context["tries"]


class TestCorruptJvpSign:
    def test_flips_and_restores(self):
        """
        The sign is flipped inside the block and restored afterwards.
        """
        with corrupt_jvp_sign():
            assert -1.0 == fields._JVP_SIGN

        assert 1.0 == fields._JVP_SIGN

    def test_restores_on_error(self):
        """
        The sign is restored even if the block raises.
        """
        with pytest.raises(ValueError), corrupt_jvp_sign():
            raise ValueError

        assert 1.0 == fields._JVP_SIGN


class TestConfigured:
    def test_applies_and_restores(self):
        """
        The configuration applies inside the block only, including the
        unconfigured state.
        """
        before = get_config()

        with configured(dtype="float32", workers=2):
            assert "float32" == get_config()["dtype"]
            assert 2 == get_config()["workers"]
            assert is_configured()

        assert before == get_config()
        assert not is_configured()

    def test_invalid_leaves_config(self):
        """
        An invalid configuration raises and leaves everything as it was.
        """
        before = get_config()

        with pytest.raises(ConfigError), configured(workers=0):
            pass

        assert before == get_config()
        assert not is_configured()
