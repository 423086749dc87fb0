# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
*structlog* setup for the command line.

Library modules only ever call ``structlog.get_logger(__name__)``; this
module decides where the events go and how they look.
"""

from __future__ import annotations

import sys

from typing import TextIO

import structlog

from structlog.processors import NAME_TO_LEVEL

from .exceptions import ConfigError


def configure_logging(
    *, json: bool = False, level: str = "info", file: TextIO | None = None
) -> None:
    """
    Configure *structlog* to render to *file* (default: `sys.stderr`).

    stdout is left to command results.

    Args:
        json:
            Render one JSON object per line instead of the human-friendly
            console format.

        level: Lowest log level that is emitted.

    Raises:
        ConfigError: For an unknown *level*.
    """
    if level.lower() not in NAME_TO_LEVEL:
        msg = f"unknown log level {level!r}"
        raise ConfigError(msg)
    file = file or sys.stderr

    renderer: structlog.typing.Processor
    if json:
        renderer = structlog.processors.JSONRenderer(sort_keys=True)
    else:
        renderer = structlog.dev.ConsoleRenderer(colors=file.isatty())

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(
            NAME_TO_LEVEL[level.lower()]
        ),
        logger_factory=structlog.PrintLoggerFactory(file),
        cache_logger_on_first_use=False,
    )
