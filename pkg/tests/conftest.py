# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

import os

import pytest
import structlog

import jacncde

from jacncde import fields
from jacncde.training import set_seed


DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture(autouse=True)
def _reset_config():
    jacncde.reset_defaults()
    structlog.reset_defaults()
    fields._JVP_SIGN = 1.0


@pytest.fixture(name="rng")
def _rng():
    """
    A seeded generator, fresh for every test.
    """
    return set_seed(42)


@pytest.fixture(name="data_dir")
def _data_dir():
    """
    Directory with the golden files.
    """
    return DATA


@pytest.fixture(name="out_dir")
def _out_dir(tmp_path, monkeypatch):
    """
    An empty output root that's also the default one.
    """
    out = tmp_path / "runs"
    monkeypatch.setenv("JACNCDE_OUT", str(out))

    return out
