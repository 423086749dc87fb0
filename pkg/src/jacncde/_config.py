# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
Global numeric defaults.  Don't reload this module or everything breaks.
"""

from __future__ import annotations

import warnings

from typing import Any

import numpy as np

from .exceptions import ConfigError


"""
Any changes to these defaults must be reflected in:

- `configuration`.
- the `configure` docstring below.
"""
_BUILTIN_DEFAULT_DTYPE = np.dtype(np.float64)
_BUILTIN_DEFAULT_SURROGATE_MODE = "replace"
_BUILTIN_DEFAULT_SURROGATE_SLOPE = 1.0
_BUILTIN_DEFAULT_WORKERS = 1

_DTYPES = {"float64": np.dtype(np.float64), "float32": np.dtype(np.float32)}
SURROGATE_MODES = ("replace", "backward-only", "heaviside")


class _Configuration:
    """
    Global defaults.
    """

    is_configured: bool = False
    dtype: np.dtype[Any] = _BUILTIN_DEFAULT_DTYPE
    surrogate_mode: str = _BUILTIN_DEFAULT_SURROGATE_MODE
    surrogate_slope: float = _BUILTIN_DEFAULT_SURROGATE_SLOPE
    workers: int = _BUILTIN_DEFAULT_WORKERS


_CONFIG = _Configuration()
"""
Global defaults used when tensors are created or a `SurrogateConfig` is
omitted.
"""


def is_configured() -> bool:
    """
    Return whether *jacncde* has been configured.

    If `False`, *jacncde* is running with builtin defaults.
    """
    return _CONFIG.is_configured


def get_config() -> dict[str, Any]:
    """
    Get a dictionary with the current configuration.

    .. note::

       Changes to the returned dictionary do *not* affect *jacncde*.
    """
    return {
        "dtype": _CONFIG.dtype.name,
        "surrogate_mode": _CONFIG.surrogate_mode,
        "surrogate_slope": _CONFIG.surrogate_slope,
        "workers": _CONFIG.workers,
    }


def get_dtype() -> np.dtype[Any]:
    """
    Return the configured floating point precision.
    """
    return _CONFIG.dtype


def configure(
    dtype: str | None = None,
    surrogate_mode: str | None = None,
    surrogate_slope: float | None = None,
    workers: int | None = None,
) -> None:
    """
    Configures the **global** defaults.

    Can be called several times, keeping an argument at `None` leaves it
    unchanged from the current setting.

    After calling for the first time, `is_configured` starts returning `True`.

    Use `reset_defaults` to undo your changes.

    Args:
        dtype:
            ``"float64"`` (default) or ``"float32"``.  Only affects tensors
            created afterwards, so switch it before building a model.

        surrogate_mode:
            How ``relu_prime`` behaves: ``"replace"`` substitutes
            ``sigmoid(k*z)`` in the forward pass, ``"backward-only"`` keeps
            the exact step forward and uses the sigmoid derivative backward,
            ``"heaviside"`` is the exact step with a zero derivative.

        surrogate_slope: The sigmoid slope *k*, must be positive and finite.

        workers:
            Threads used to run independent tapes of one mini-batch.

    Raises:
        ConfigError: If a value is out of range.  Nothing is changed then.
    """
    if dtype is not None and dtype not in _DTYPES:
        msg = f"dtype must be one of {sorted(_DTYPES)}, not {dtype!r}"
        raise ConfigError(msg)
    if surrogate_mode is not None and surrogate_mode not in SURROGATE_MODES:
        msg = f"surrogate_mode must be one of {SURROGATE_MODES}, not {surrogate_mode!r}"
        raise ConfigError(msg)
    if surrogate_slope is not None and not (
        surrogate_slope > 0 and np.isfinite(surrogate_slope)
    ):
        msg = f"surrogate_slope must be positive and finite, not {surrogate_slope!r}"
        raise ConfigError(msg)
    if workers is not None and workers < 1:
        msg = f"workers must be at least 1, not {workers!r}"
        raise ConfigError(msg)

    _CONFIG.is_configured = True

    if dtype is not None:
        _CONFIG.dtype = _DTYPES[dtype]
    if surrogate_mode is not None:
        _CONFIG.surrogate_mode = surrogate_mode
    if surrogate_slope is not None:
        _CONFIG.surrogate_slope = float(surrogate_slope)
    if workers is not None:
        _CONFIG.workers = workers


def configure_once(
    dtype: str | None = None,
    surrogate_mode: str | None = None,
    surrogate_slope: float | None = None,
    workers: int | None = None,
) -> None:
    """
    Configures if *jacncde* isn't configured yet.

    It does *not* matter whether it was configured using `configure` or
    `configure_once` before.

    Raises:
        RuntimeWarning: if repeated configuration is attempted.
    """
    if not _CONFIG.is_configured:
        configure(
            dtype=dtype,
            surrogate_mode=surrogate_mode,
            surrogate_slope=surrogate_slope,
            workers=workers,
        )
    else:
        warnings.warn(
            "Repeated configuration attempted.", RuntimeWarning, stacklevel=2
        )


def reset_defaults() -> None:
    """
    Resets global default values to builtin defaults.

    `is_configured` starts returning `False` afterwards.
    """
    _CONFIG.is_configured = False
    _CONFIG.dtype = _BUILTIN_DEFAULT_DTYPE
    _CONFIG.surrogate_mode = _BUILTIN_DEFAULT_SURROGATE_MODE
    _CONFIG.surrogate_slope = _BUILTIN_DEFAULT_SURROGATE_SLOPE
    _CONFIG.workers = _BUILTIN_DEFAULT_WORKERS
