# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.


from __future__ import annotations

from jacncde import (
    autodiff,
    data,
    exceptions,
    fields,
    interpolation,
    odesolver,
    testing,
    training,
    typing,
)
from jacncde._config import (
    configure,
    configure_once,
    get_config,
    is_configured,
    reset_defaults,
)
from jacncde.autodiff import SurrogateConfig, Tape, Var
from jacncde.data import Dataset, synth
from jacncde.exceptions import (
    ConfigError,
    ContractError,
    InputError,
    JacncdeError,
    NumericError,
    ParseError,
    ShapeError,
)
from jacncde.fields import count_params
from jacncde.interpolation import CubicPath, TimeSeriesSample
from jacncde.odesolver import SolverConfig
from jacncde.training import Model, ModelConfig, TrainReport


__title__ = "jacncde"

__license__ = "MIT or Apache License, Version 2.0"


__all__ = [
    "ConfigError",
    "ContractError",
    "CubicPath",
    "Dataset",
    "InputError",
    "JacncdeError",
    "Model",
    "ModelConfig",
    "NumericError",
    "ParseError",
    "ShapeError",
    "SolverConfig",
    "SurrogateConfig",
    "Tape",
    "TimeSeriesSample",
    "TrainReport",
    "Var",
    "autodiff",
    "configure",
    "configure_once",
    "count_params",
    "data",
    "exceptions",
    "fields",
    "get_config",
    "interpolation",
    "is_configured",
    "odesolver",
    "reset_defaults",
    "synth",
    "testing",
    "training",
    "typing",
]


def __getattr__(name: str) -> str:
    from importlib.metadata import version

    if name != "__version__":
        msg = f"module {__name__} has no attribute {name}"
        raise AttributeError(msg)

    return version("jacncde")
