# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

import warnings

import numpy as np
import pytest

import jacncde

from jacncde._config import (
    _BUILTIN_DEFAULT_DTYPE,
    _CONFIG,
    configure,
    configure_once,
    get_config,
    get_dtype,
    is_configured,
    reset_defaults,
)
from jacncde.autodiff import SurrogateConfig, as_tensor
from jacncde.exceptions import ConfigError


class TestConfigure:
    def test_defaults(self):
        """
        Without configuration, float64 and the replace surrogate with slope 1
        on a single worker are used.
        """
        assert {
            "dtype": "float64",
            "surrogate_mode": "replace",
            "surrogate_slope": 1.0,
            "workers": 1,
        } == get_config()
        assert not is_configured()

    def test_configure_all(self):
        """
        All knobs can be set at once and are reflected by get_config.
        """
        configure(
            dtype="float32",
            surrogate_mode="backward-only",
            surrogate_slope=4.0,
            workers=3,
        )

        assert {
            "dtype": "float32",
            "surrogate_mode": "backward-only",
            "surrogate_slope": 4.0,
            "workers": 3,
        } == get_config()
        assert is_configured()

    def test_none_leaves_unchanged(self):
        """
        Arguments left at None don't change the current setting.
        """
        configure(surrogate_mode="heaviside")
        configure(workers=2)

        assert "heaviside" == get_config()["surrogate_mode"]
        assert 2 == get_config()["workers"]

    @pytest.mark.parametrize(
        "kw",
        [
            {"dtype": "float16"},
            {"surrogate_mode": "smooth"},
            {"surrogate_slope": 0.0},
            {"surrogate_slope": -1.0},
            {"surrogate_slope": float("inf")},
            {"workers": 0},
        ],
    )
    def test_invalid(self, kw):
        """
        Invalid values raise ConfigError and change nothing at all.
        """
        before = get_config()

        with pytest.raises(ConfigError):
            configure(**{"workers": 4, **kw})

        assert before == get_config()
        assert not is_configured()

    def test_dtype_applies_to_new_tensors(self):
        """
        Tensors created after switching the precision use it.
        """
        configure(dtype="float32")

        assert np.float32 == get_dtype()
        assert np.float32 == as_tensor([1.0, 2.0]).dtype

    def test_surrogate_default_follows_config(self):
        """
        SurrogateConfig.from_config picks up the global surrogate settings.
        """
        configure(surrogate_mode="backward-only", surrogate_slope=2.5)

        assert SurrogateConfig("backward-only", 2.5) == (
            SurrogateConfig.from_config()
        )

    def test_get_config_is_a_copy(self):
        """
        Changes to the returned dictionary don't affect the configuration.
        """
        get_config()["workers"] = 17

        assert 1 == _CONFIG.workers

    def test_reexported(self):
        """
        The configuration API is available from the package.
        """
        assert jacncde.configure is configure
        assert jacncde.reset_defaults is reset_defaults


class TestConfigureOnce:
    def test_configures_if_unconfigured(self):
        """
        configure_once configures if nothing has been configured before.
        """
        configure_once(workers=2)

        assert 2 == get_config()["workers"]

    def test_warns_if_configured(self):
        """
        configure_once warns and doesn't change anything if configured.
        """
        configure(workers=2)

        with pytest.warns(RuntimeWarning, match="Repeated configuration"):
            configure_once(workers=3)

        assert 2 == get_config()["workers"]

    def test_no_warning_first_time(self):
        """
        The first configure_once is silent.
        """
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            configure_once(dtype="float32")


class TestResetDefaults:
    def test_resets(self):
        """
        reset_defaults restores builtin defaults and the unconfigured state.
        """
        configure(dtype="float32", surrogate_mode="heaviside", workers=5)

        reset_defaults()

        assert _BUILTIN_DEFAULT_DTYPE == get_dtype()
        assert "replace" == get_config()["surrogate_mode"]
        assert 1 == get_config()["workers"]
        assert not is_configured()
