# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
The vector fields that drive the hidden state.

*matrix*
    ``f(h) Xdot`` where ``f(h) = tanh(W2 relu(W1 h + b1) + b2)`` is reshaped
    into a row-major *v*×*u* matrix.  Parameter count is dominated by the
    ``(u*v)×d`` output layer.

*jacobian-truncated*
    Differentiates the implicit recurrence ``h = f(X, h)`` of an Elman cell
    ``f(X, h) = tanh(W2 relu(Wh h + Wx X + b1) + b2)``.  The exact dynamics
    are ``(I - J_h)^-1 J_x Xdot``; the inverse is replaced by ``I + J_h`` and
    both products are Jacobian-vector products, so no Jacobian is ever formed.

*jacobian-exact*
    The same dynamics with the inverse computed by materializing both
    Jacobians and solving the linear system.  Forward-only, for diagnostics.

All fields work on batches: a state matrix holds one sample per row, and a
single state vector is treated as a batch of one.
"""

from __future__ import annotations

import itertools

from dataclasses import dataclass, fields
from typing import Any, Callable, Mapping, Union

import numpy as np

from ._linalg import gauss_solve
from .autodiff import (
    SurrogateConfig,
    Tape,
    Var,
    activation,
    add,
    const,
    matmul,
    mul_elem,
    relu_prime,
    reshape,
    scale,
    sub,
    transpose,
)
from .exceptions import InputError, NumericError, ShapeError
from .interpolation import CubicPath
from .typing import Tensor, VectorField


__all__ = [
    "FIELD_KINDS",
    "FieldParams",
    "JacobianFieldParams",
    "MatrixFieldParams",
    "count_params",
    "detached",
    "enumerate_params",
    "field_param_count",
    "find_ratio",
    "init_arrays",
    "jacobian_field_exact",
    "jacobian_field_truncated",
    "jvp_h",
    "jvp_x",
    "make_field",
    "matrix_field",
    "param_shapes",
    "params_from_arrays",
    "rnn_cell",
]

FIELD_KINDS = ("matrix", "jacobian-truncated", "jacobian-exact")

_JVP_SIGN = 1.0
"""
Multiplies every Jacobian-vector product.  Only ever changed by
`jacncde.testing.corrupt_jvp_sign` to prove that the checks in
`jacncde.verify` catch a broken Jacobian.
"""


@dataclass(frozen=True)
class MatrixFieldParams:
    """
    ``W1``: *d*×*v*, ``b1``: *d*, ``W2``: (*u*·*v*)×*d*, ``b2``: *u*·*v*.
    """

    W1: Var
    b1: Var
    W2: Var
    b2: Var

    @property
    def dims(self) -> tuple[int, int, int]:
        d, v = self.W1.shape
        return self.W2.shape[0] // v, v, d

    def __post_init__(self) -> None:
        d, v = self.W1.shape
        uv = self.W2.shape[0]
        if (
            self.b1.shape != (d,)
            or self.W2.shape != (uv, d)
            or self.b2.shape != (uv,)
            or uv % v
        ):
            msg = (
                "inconsistent matrix field parameters: "
                f"W1 {self.W1.shape}, b1 {self.b1.shape}, "
                f"W2 {self.W2.shape}, b2 {self.b2.shape}"
            )
            raise ShapeError(msg)


@dataclass(frozen=True)
class JacobianFieldParams:
    """
    ``Wx``: *d*×*u*, ``Wh``: *d*×*v*, ``b1``: *d*, ``W2``: *v*×*d*,
    ``b2``: *v*.
    """

    Wx: Var
    Wh: Var
    b1: Var
    W2: Var
    b2: Var

    @property
    def dims(self) -> tuple[int, int, int]:
        d, u = self.Wx.shape
        return u, self.Wh.shape[1], d

    def __post_init__(self) -> None:
        d, u = self.Wx.shape
        v = self.Wh.shape[1]
        if (
            self.Wh.shape != (d, v)
            or self.b1.shape != (d,)
            or self.W2.shape != (v, d)
            or self.b2.shape != (v,)
        ):
            msg = (
                "inconsistent jacobian field parameters: "
                f"Wx {self.Wx.shape}, Wh {self.Wh.shape}, b1 {self.b1.shape}, "
                f"W2 {self.W2.shape}, b2 {self.b2.shape}"
            )
            raise ShapeError(msg)


FieldParams = Union[MatrixFieldParams, JacobianFieldParams]


def _params_class(
    kind: str,
) -> type[MatrixFieldParams] | type[JacobianFieldParams]:
    if kind == "matrix":
        return MatrixFieldParams
    if kind in FIELD_KINDS:
        return JacobianFieldParams

    msg = f"field kind must be one of {FIELD_KINDS}, not {kind!r}"
    raise InputError(msg)


def param_shapes(
    kind: str, u: int, v: int, d: int
) -> dict[str, tuple[int, ...]]:
    """
    Shapes of the field parameters of *kind*, by name.
    """
    if _params_class(kind) is MatrixFieldParams:
        return {"W1": (d, v), "b1": (d,), "W2": (u * v, d), "b2": (u * v,)}

    return {"Wx": (d, u), "Wh": (d, v), "b1": (d,), "W2": (v, d), "b2": (v,)}


def init_arrays(
    kind: str, u: int, v: int, d: int, rng: np.random.Generator
) -> dict[str, Tensor]:
    """
    Draw weights uniformly from ``±1/sqrt(fan_in)``; biases start at zero.
    """
    rv = {}
    for name, shape in param_shapes(kind, u, v, d).items():
        if len(shape) == 1:
            rv[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[1])
            rv[name] = rng.uniform(-bound, bound, size=shape)

    return rv


def params_from_arrays(
    kind: str, arrays: Mapping[str, Any], tape: Tape | None = None
) -> FieldParams:
    r"""
    Wrap *arrays* as field parameters: leaves on *tape*, or constants.

    Entries that already are `Var`\ s are used as they are.
    """
    cls = _params_class(kind)
    new: Callable[[Any], Var] = tape.leaf if tape is not None else const

    def wrap(a: Any) -> Var:
        return a if isinstance(a, Var) else new(a)

    try:
        return cls(**{f.name: wrap(arrays[f.name]) for f in fields(cls)})
    except KeyError as e:
        msg = f"missing {kind} field parameter {e.args[0]!r}"
        raise InputError(msg) from None


def detached(p: FieldParams) -> FieldParams:
    """
    The same parameter values as constants.
    """
    return type(p)(**{f.name: const(getattr(p, f.name)) for f in fields(p)})


def _as_rows(x: Any) -> Var:
    """
    Promote a vector to a one-row matrix.
    """
    if not isinstance(x, Var):
        x = const(x)
    if len(x.shape) == 1:
        return reshape(x, (1, x.shape[0]))

    return x


def _squeeze_like(out: Var, like: Var | Tensor) -> Var:
    if len(like.shape) == 1:
        return reshape(out, (out.shape[1],))

    return out


def _check_last(name: str, x: Any, n: int, what: str) -> None:
    shape = x.shape if isinstance(x, Var) else np.shape(x)
    if len(shape) not in (1, 2) or shape[-1] != n:
        msg = f"{name} of shape {shape} doesn't match {what} {n}"
        raise ShapeError(msg)


def _check_rows(a: Var, b: Var) -> None:
    if a.shape[0] != b.shape[0]:
        msg = f"batch sizes differ: {a.shape} and {b.shape}"
        raise ShapeError(msg)


def _dense(x: Var, W: Var, b: Var | None = None) -> Var:
    out = matmul(x, transpose(W))

    return add(out, b) if b is not None else out


def matrix_field(p: MatrixFieldParams, h: Var, Xdot: Any) -> Var:
    """
    ``tanh(W2 relu(W1 h + b1) + b2)`` reshaped row-major to *v*×*u*, times
    *Xdot*.

    Only *h* enters the network; the control acts through *Xdot* alone.
    """
    u, v, _ = p.dims
    _check_last("hidden state", h, v, "hidden size")
    _check_last("control derivative", Xdot, u, "input channels")

    hr = _as_rows(h)
    xdot = _as_rows(Xdot)
    _check_rows(hr, xdot)

    inner = activation("relu", _dense(hr, p.W1, p.b1))
    m = activation("tanh", _dense(inner, p.W2, p.b2))
    # m[:, i*u + j] pairs with xdot[:, j]; summing each block of u gives row i.
    tiled = const(np.tile(xdot.value, (1, v)))
    blocks = const(np.kron(np.eye(v), np.ones((u, 1))))

    return _squeeze_like(matmul(mul_elem(m, tiled), blocks), h)


def rnn_cell(p: JacobianFieldParams, X: Any, h: Var) -> Var:
    """
    The Elman cell ``tanh(W2 relu(Wh h + Wx X + b1) + b2)``.
    """
    out, _ = _cell(p, X, h)

    return out


class _CellParts:
    __slots__ = ("d_relu", "d_tanh")

    def __init__(self, d_relu: Var, d_tanh: Var):
        self.d_relu = d_relu
        self.d_tanh = d_tanh


def _cell(
    p: JacobianFieldParams, X: Any, h: Var, cfg: SurrogateConfig | None = None
) -> tuple[Var, _CellParts]:
    u, v, _ = p.dims
    _check_last("hidden state", h, v, "hidden size")
    _check_last("control", X, u, "input channels")
    hr = _as_rows(h)
    xr = _as_rows(X)
    _check_rows(hr, xr)

    z = add(
        add(matmul(hr, transpose(p.Wh)), matmul(xr, transpose(p.Wx))), p.b1
    )
    a = activation("tanh", _dense(activation("relu", z), p.W2, p.b2))
    d_tanh = sub(const(np.ones(a.shape)), mul_elem(a, a))

    parts = _CellParts(relu_prime(z, cfg), d_tanh)

    return _squeeze_like(a, h), parts


def _jvp(p: JacobianFieldParams, W: Var, parts: _CellParts, vec: Var) -> Var:
    inner = mul_elem(parts.d_relu, matmul(vec, transpose(W)))
    out = mul_elem(parts.d_tanh, matmul(inner, transpose(p.W2)))

    return out if _JVP_SIGN == 1.0 else scale(out, _JVP_SIGN)


def jvp_x(
    p: JacobianFieldParams,
    X: Any,
    h: Var,
    vvec: Any,
    cfg: SurrogateConfig | None = None,
) -> Var:
    """
    ``J_x @ vvec`` for the cell at ``(X, h)``, using diagonal scalings and
    matrix products only.

    ``relu'`` is produced by `relu_prime` with *cfg*.
    """
    u = p.dims[0]
    _check_last("tangent", vvec, u, "input channels")
    _, parts = _cell(p, X, h, cfg)
    vec = _as_rows(vvec)

    return _squeeze_like(_jvp(p, p.Wx, parts, vec), h)


def jvp_h(
    p: JacobianFieldParams,
    X: Any,
    h: Var,
    wvec: Any,
    cfg: SurrogateConfig | None = None,
) -> Var:
    """
    ``J_h @ wvec`` for the cell at ``(X, h)``.
    """
    v = p.dims[1]
    _check_last("tangent", wvec, v, "hidden size")
    _, parts = _cell(p, X, h, cfg)
    vec = _as_rows(wvec)

    return _squeeze_like(_jvp(p, p.Wh, parts, vec), h)


def jacobian_field_truncated(
    p: JacobianFieldParams,
    h: Var,
    X: Any,
    Xdot: Any,
    cfg: SurrogateConfig | None = None,
) -> Var:
    """
    ``(I + J_h) J_x Xdot``, the first-order expansion of the implicit
    dynamics.
    """
    u = p.dims[0]
    _check_last("control derivative", Xdot, u, "input channels")
    _, parts = _cell(p, X, h, cfg)

    g_x = _jvp(p, p.Wx, parts, _as_rows(Xdot))
    g_xh = _jvp(p, p.Wh, parts, g_x)

    return _squeeze_like(add(g_x, g_xh), h)


def jacobian_field_exact(
    p: JacobianFieldParams,
    h: Var,
    X: Any,
    Xdot: Any,
    cfg: SurrogateConfig | None = None,
) -> Var:
    """
    ``(I - J_h)^-1 J_x Xdot`` with both Jacobians materialized column by
    column.

    The result is a constant: nothing is recorded on any tape.

    Raises:
        NumericError:
            If ``I - J_h`` is singular or the solve residual is too large.
            The context holds the offending row.
    """
    p = detached(p)
    u, v, _ = p.dims
    hr = _as_rows(const(h.value if isinstance(h, Var) else h))
    xr = _as_rows(X)
    xdot = _as_rows(Xdot)
    _check_last("control derivative", xdot, u, "input channels")
    _check_rows(hr, xdot)

    b = hr.shape[0]

    def columns(n: int, W: Var) -> Tensor:
        # Row b*n + j of the batch evaluates sample b along basis vector j.
        hs = const(np.repeat(hr.value, n, axis=0))
        xs = const(np.repeat(xr.value, n, axis=0))
        _, parts = _cell(p, xs, hs, cfg)
        basis = const(np.tile(np.eye(n), (b, 1)))
        jv = _jvp(p, W, parts, basis).value

        return jv.reshape(b, n, v).transpose(0, 2, 1)  # type: ignore[no-any-return]

    jx = columns(u, p.Wx)
    jh = columns(v, p.Wh)
    eye = np.eye(v)

    out = np.empty((b, v))
    for i in range(b):
        try:
            out[i] = gauss_solve(eye - jh[i], jx[i] @ xdot.value[i])
        except NumericError as e:
            raise e.with_context(row=i) from None

    return _squeeze_like(const(out), h)


def make_field(
    kind: str,
    p: FieldParams,
    path: CubicPath,
    cfg: SurrogateConfig | None = None,
) -> VectorField:
    """
    Close *p* over the control *path*, yielding ``F(t, h)`` for
    `jacncde.odesolver.integrate`.
    """
    if kind == "matrix":
        assert isinstance(p, MatrixFieldParams)

        def matrix(t: float, h: Var) -> Var:
            _, xdot = path(t)
            return matrix_field(p, h, xdot)

        return matrix

    assert isinstance(p, JacobianFieldParams)
    impl = (
        jacobian_field_exact
        if kind == "jacobian-exact"
        else jacobian_field_truncated
    )

    def jacobian(t: float, h: Var) -> Var:
        x, xdot = path(t)
        return impl(p, h, x, xdot, cfg)

    return jacobian


def field_param_count(kind: str, u: int, v: int, d: int) -> int:
    """
    Number of vector-field parameters alone.
    """
    if _params_class(kind) is MatrixFieldParams:
        return d * v + d + (u * v) * d + u * v

    return d * u + d * v + d + v * d + v


def count_params(kind: str, u: int, v: int, d: int, classes: int) -> int:
    """
    Total trainable parameters of a classifier with field *kind*.

    Includes the field, the affine lift ``h0 = W X(t1) + b`` (``u*v + v``)
    and the linear readout (``v*C + C``).
    """
    return (
        field_param_count(kind, u, v, d)
        + (u * v + v)
        + (v * classes + classes)
    )


def enumerate_params(arrays: Mapping[str, Tensor]) -> int:
    """
    Count the entries actually allocated in *arrays*.
    """
    return sum(int(np.asarray(a).size) for a in arrays.values())


def find_ratio(
    target: float,
    tol: float | None = None,
    *,
    us: tuple[int, ...] = tuple(range(1, 9)),
    vs: tuple[int, ...] = (4, 8, 16, 32, 64),
    ds: tuple[int, ...] = (8, 16, 32, 64, 128, 256),
) -> tuple[tuple[int, int, int], float]:
    """
    Grid-search ``(u, v, d)`` for the matrix-to-jacobian field-part ratio
    closest to *target*.

    Ties go to the configuration with the fewest field parameters.

    Returns:
        ``((u, v, d), ratio)``

    Raises:
        InputError:
            If the grid is empty, or *tol* is given and even the closest ratio
            is farther than *tol* from *target*.
    """
    best: tuple[float, int, tuple[int, int, int], float] | None = None
    for u, v, d in itertools.product(us, vs, ds):
        m = field_param_count("matrix", u, v, d)
        j = field_param_count("jacobian-truncated", u, v, d)
        ratio = m / j
        key = (abs(ratio - target), m + j, (u, v, d), ratio)
        if best is None or key[:2] < best[:2]:
            best = key

    if best is None:
        msg = "empty search grid"
        raise InputError(msg)
    if tol is not None and best[0] > tol:
        msg = f"no (u, v, d) on the grid has a field-part ratio within {tol} of {target}; closest is {best[3]:.3f} at {best[2]}"
        raise InputError(msg)

    return best[2], best[3]
