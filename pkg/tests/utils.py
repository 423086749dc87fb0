# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
Shared test utilities.
"""

import json

import numpy as np

from jacncde.fields import init_arrays, params_from_arrays


def jacobian_params(rng, u=3, v=5, d=7, *, biases=True, **overrides):
    """
    Random jacobian field parameters as constants.
    """
    arrays = init_arrays("jacobian-truncated", u, v, d, rng)
    if biases:
        arrays["b1"] = rng.uniform(-0.5, 0.5, size=d)
        arrays["b2"] = rng.uniform(-0.5, 0.5, size=v)
    arrays.update(overrides)

    return params_from_arrays("jacobian-truncated", arrays)


def matrix_params(rng, u=2, v=3, d=4, **overrides):
    """
    Random matrix field parameters as constants.
    """
    arrays = init_arrays("matrix", u, v, d, rng)
    arrays["b1"] = rng.uniform(-0.5, 0.5, size=d)
    arrays["b2"] = rng.uniform(-0.5, 0.5, size=u * v)
    arrays.update(overrides)

    return params_from_arrays("matrix", arrays)


def zeros_like_params(p):
    """
    The same kind of parameters with every entry zero.
    """
    kind = "matrix" if hasattr(p, "W1") else "jacobian-truncated"
    return params_from_arrays(
        kind,
        {
            name: np.zeros(getattr(p, name).shape)
            for name in p.__dataclass_fields__
        },
    )


def write_config(path, **sections):
    """
    Write a JSON run configuration and return its path as a string.
    """
    path.write_text(json.dumps(sections))

    return str(path)
