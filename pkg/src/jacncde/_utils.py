# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
Generic utilities.
"""

from __future__ import annotations

import hashlib
import json

from contextlib import suppress
from typing import Any

import numpy as np


def _default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)

    msg = f"Object of type {type(obj).__name__} is not JSON serializable"
    raise TypeError(msg)


def canonical_json(obj: Any) -> str:
    """
    Serialize *obj* with sorted keys and no insignificant whitespace.
    """
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), default=_default
    )


def config_hash(obj: Any) -> str:
    """
    sha256 of the canonical JSON of *obj*.
    """
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def philox(seed: int) -> np.random.Generator:
    """
    A Philox generator for *seed*, taken modulo 2**64 so that negative and
    oversized seeds are fine too.
    """
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


def get_version() -> str:
    # Uninstalled source checkouts have no metadata.
    version = "0+unknown"
    with suppress(Exception):
        from importlib.metadata import version as _version

        version = _version("jacncde")

    return version
