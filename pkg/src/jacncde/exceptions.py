# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
Exceptions factored out to avoid import loops.
"""

from __future__ import annotations

import sys

from typing import Any, Mapping


if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self


class JacncdeError(Exception):
    """
    Base class for every error that *jacncde* raises.
    """


class ShapeError(JacncdeError, ValueError):
    """
    Operands have incompatible shapes.

    The message always names both shapes.
    """


class ContractError(JacncdeError):
    r"""
    An API contract has been violated.

    For example a non-scalar backward seed, or `Var`\ s from two different
    tapes meeting in one operation.
    """


class NumericError(JacncdeError, ArithmeticError):
    """
    A computation produced non-finite values or hit a singular system.

    Args:
        context:
            Where it happened, e.g. ``{"step": 3, "t": 0.25}`` or
            ``{"epoch": 2, "batch": 7}``.  Callers further up add their own
            keys when re-raising.
    """

    def __init__(self, msg: str, context: Mapping[str, Any] | None = None):
        super().__init__(msg)
        self.context: dict[str, Any] = dict(context or {})

    def __str__(self) -> str:
        msg = super().__str__()
        if not self.context:
            return msg

        ctx = " ".join(f"{k}={v!r}" for k, v in self.context.items())

        return f"{msg} ({ctx})"

    def with_context(self, **kw: Any) -> Self:
        """
        Return a copy of this error, of the same class, with *kw* added to
        its context.
        """
        return type(self)(super().__str__(), {**self.context, **kw})


class InputError(JacncdeError, ValueError):
    """
    Data handed to a function violates its preconditions.
    """


class ParseError(InputError):
    """
    A file could not be parsed.

    Args:
        line: 1-based line number, if known.

        case: 0-based case (sample) index, if known.
    """

    def __init__(
        self, msg: str, *, line: int | None = None, case: int | None = None
    ):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if case is not None:
            where.append(f"case {case}")
        super().__init__(f"{msg} ({', '.join(where)})" if where else msg)
        self.line = line
        self.case = case


class ConfigError(JacncdeError, ValueError):
    """
    A run or global configuration is invalid.
    """
