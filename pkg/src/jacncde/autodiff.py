# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
Dense tensor arithmetic with a tape-based reverse-mode differentiation engine.

Every operation on a `Var` that lives on a `Tape` appends one node to that
tape: its kind, the node ids of its parents, and whatever forward values its
backward rule needs.  `Tape.backward` then walks the nodes in reverse order
exactly once and accumulates gradients.  Operations whose operands are all
constants are computed eagerly and recorded nowhere, which is how the
forward-only paths (evaluation, the exact-inverse field) run through the very
same code.

Only two shapes are supported: vectors and matrices.  The single broadcasting
rule is a vector added to (or multiplied with) every row of a matrix.
"""

from __future__ import annotations

import math

from dataclasses import dataclass
from typing import Any, Callable, NamedTuple, Sequence, Union

import numpy as np

from ._config import SURROGATE_MODES, _CONFIG, get_dtype
from .exceptions import ConfigError, ContractError, InputError, ShapeError
from .typing import Labels, Tensor


__all__ = [
    "SurrogateConfig",
    "Tape",
    "Var",
    "activation",
    "add",
    "as_tensor",
    "backward",
    "const",
    "cross_entropy",
    "matmul",
    "mul_elem",
    "relu_prime",
    "reshape",
    "scale",
    "sigmoid",
    "sub",
    "sum_all",
    "transpose",
]


def as_tensor(x: Any, dtype: Any = None) -> Tensor:
    """
    Return a read-only copy of *x* in the configured (or given) precision.
    """
    arr = np.array(x, dtype=dtype or get_dtype(), copy=True)
    arr.flags.writeable = False

    return arr


def _frozen(arr: Tensor) -> Tensor:
    arr.flags.writeable = False

    return arr


def sigmoid(z: Tensor) -> Tensor:
    """
    Overflow-free logistic function on plain arrays.
    """
    e = np.exp(-np.abs(z))

    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))  # type: ignore[no-any-return]


@dataclass(frozen=True)
class SurrogateConfig:
    """
    How the derivative of ReLU is produced inside hand-written Jacobians.

    Args:
        mode:
            ``"replace"``: the forward value is ``sigmoid(k*z)`` and it is
            differentiated as such.

            ``"backward-only"``: the forward value is the exact step (0 at
            ``z == 0``), the backward pass pretends it was
            ``sigmoid(k*z)``.

            ``"heaviside"``: exact step forward, zero derivative backward.

        slope: The slope *k* of the sigmoid.  Must be positive.
    """

    mode: str = "replace"
    slope: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in SURROGATE_MODES:
            msg = f"surrogate mode must be one of {SURROGATE_MODES}, not {self.mode!r}"
            raise ConfigError(msg)
        if not (self.slope > 0 and np.isfinite(self.slope)):
            msg = f"surrogate slope must be positive and finite, not {self.slope!r}"
            raise ConfigError(msg)

    @classmethod
    def from_config(cls) -> SurrogateConfig:
        """
        Build the module-wide default from `jacncde.configure`.
        """
        return cls(mode=_CONFIG.surrogate_mode, slope=_CONFIG.surrogate_slope)


class _Node(NamedTuple):
    kind: str
    parents: tuple[int | None, ...]
    saved: tuple[Any, ...]


_VJPS: dict[str, Callable[..., tuple[Tensor | None, ...]]] = {}


def defvjp(
    kind: str,
) -> Callable[
    [Callable[..., tuple[Tensor | None, ...]]],
    Callable[..., tuple[Tensor | None, ...]],
]:
    """
    Register the backward rule of the node kind *kind*.

    The rule is called as ``rule(g, *saved)`` and returns one gradient (or
    `None` for "no contribution") per parent.
    """

    def register(
        rule: Callable[..., tuple[Tensor | None, ...]],
    ) -> Callable[..., tuple[Tensor | None, ...]]:
        _VJPS[kind] = rule
        return rule

    return register


class Tape:
    """
    Reverse-mode differentiation record.

    A tape is single-writer: build it on one thread.  Run independent tapes
    in parallel and sum their leaf gradients afterwards.

    :ivar float kink_margin:
        The smallest ``|z|`` any ReLU or step node has seen.  Finite
        difference oracles are only trustworthy when it is comfortably larger
        than their step.
    """

    def __init__(self) -> None:
        self._nodes: list[_Node] = []
        self._grads: list[Tensor | None] = []
        self.kink_margin = math.inf

    def __len__(self) -> int:
        return len(self._nodes)

    def __repr__(self) -> str:
        return f"<Tape with {len(self._nodes)} node(s)>"

    @property
    def nodes(self) -> tuple[_Node, ...]:
        return tuple(self._nodes)

    def leaf(self, value: Any) -> Var:
        """
        Register *value* as a differentiable input.
        """
        arr = as_tensor(value)
        self._nodes.append(_Node("leaf", (), (arr.shape, arr.dtype)))

        return Var(arr, len(self._nodes) - 1, self)

    def record(
        self,
        kind: str,
        parents: Sequence[Var],
        value: Tensor,
        saved: tuple[Any, ...] = (),
    ) -> Var:
        """
        Append a node and return the `Var` holding its *value*.
        """
        self._nodes.append(
            _Node(
                kind,
                tuple(p.node if p.tape is self else None for p in parents),
                saved,
            )
        )

        return Var(_frozen(value), len(self._nodes) - 1, self)

    def note_kink(self, z: Tensor) -> None:
        if z.size:
            self.kink_margin = min(self.kink_margin, float(np.min(np.abs(z))))

    def backward(self, seed: Var) -> None:
        """
        Populate gradients of *seed* with respect to every node before it.

        Raises:
            ContractError:
                If *seed* isn't a scalar recorded on this tape.
        """
        if seed.tape is not self or seed.node is None:
            msg = "backward seed is not recorded on this tape"
            raise ContractError(msg)
        if seed.value.size != 1:
            msg = f"backward needs a scalar seed, got shape {seed.shape}"
            raise ContractError(msg)

        grads: list[Tensor | None] = [None] * len(self._nodes)
        grads[seed.node] = np.ones_like(seed.value)
        for i in range(seed.node, -1, -1):
            g = grads[i]
            node = self._nodes[i]
            if g is None or node.kind == "leaf":
                continue

            for parent, pg in zip(
                node.parents, _VJPS[node.kind](g, *node.saved)
            ):
                if parent is None or pg is None:
                    continue
                prev = grads[parent]
                grads[parent] = pg if prev is None else prev + pg

        self._grads = grads

    def grad(self, var: Var) -> Tensor:
        """
        Gradient accumulated for *var* by the last `backward`.

        Vars the seed doesn't depend on get zeros.
        """
        if var.tape is not self or var.node is None:
            msg = "var is not recorded on this tape"
            raise ContractError(msg)
        g = self._grads[var.node] if var.node < len(self._grads) else None

        return np.zeros_like(var.value) if g is None else g


class Var:
    """
    A value plus the tape node that produced it.

    Constants have neither node nor tape.
    """

    __slots__ = ("node", "tape", "value")

    __array_priority__ = 1000

    def __init__(
        self, value: Tensor, node: int | None = None, tape: Tape | None = None
    ):
        self.value = value
        self.node = node
        self.tape = tape

    def __repr__(self) -> str:
        return f"<Var(shape={self.shape}, node={self.node})>"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape  # type: ignore[no-any-return]

    @property
    def T(self) -> Var:
        return transpose(self)

    def __add__(self, other: Operand) -> Var:
        return add(self, _lift(other, self))

    def __radd__(self, other: Operand) -> Var:
        return add(_lift(other, self), self)

    def __sub__(self, other: Operand) -> Var:
        return sub(self, _lift(other, self))

    def __rsub__(self, other: Operand) -> Var:
        return sub(_lift(other, self), self)

    def __mul__(self, other: Operand) -> Var:
        if isinstance(other, (int, float)):
            return scale(self, other)

        return mul_elem(self, _lift(other, self))

    def __rmul__(self, other: Operand) -> Var:
        return self.__mul__(other)

    def __neg__(self) -> Var:
        return scale(self, -1.0)

    def __matmul__(self, other: Var) -> Var:
        return matmul(self, other)


Operand = Union[Var, Tensor, float, int]


def const(value: Any) -> Var:
    """
    Wrap *value* as a constant: it takes part in computations but is never
    differentiated.
    """
    if isinstance(value, Var):
        return Var(value.value)

    return Var(as_tensor(value))


def _lift(x: Operand, like: Var) -> Var:
    if isinstance(x, Var):
        return x
    if isinstance(x, (int, float)):
        return Var(_frozen(np.full_like(like.value, x)))

    return const(x)


def _tape_of(*vs: Var) -> Tape | None:
    tape = None
    for v in vs:
        if v.tape is None:
            continue
        if tape is None:
            tape = v.tape
        elif v.tape is not tape:
            msg = "Vars from different tapes can't be combined"
            raise ContractError(msg)

    return tape


def _emit(
    kind: str, parents: Sequence[Var], value: Any, saved: tuple[Any, ...] = ()
) -> Var:
    value = np.asarray(value)
    tape = _tape_of(*parents)
    if tape is None:
        return Var(_frozen(value))

    return tape.record(kind, parents, value, saved)


def _check_binary(op: str, a: Var, b: Var) -> bool:
    """
    Return whether *b* is a row-broadcast vector; raise if incompatible.
    """
    if a.shape == b.shape:
        return False
    if len(a.shape) == 2 and len(b.shape) == 1 and a.shape[1] == b.shape[0]:
        return True

    msg = f"{op}: incompatible shapes {a.shape} and {b.shape}"
    raise ShapeError(msg)


def _unbroadcast(g: Tensor, broadcast: bool) -> Tensor:
    return g.sum(axis=0) if broadcast else g


def add(a: Var, b: Var) -> Var:
    """
    Elementwise sum; *b* may be a vector added to every row of *a*.
    """
    bc = _check_binary("add", a, b)

    return _emit("add", (a, b), a.value + b.value, (bc,))


@defvjp("add")
def _add_vjp(g: Tensor, bc: bool) -> tuple[Tensor | None, ...]:
    return g, _unbroadcast(g, bc)


def sub(a: Var, b: Var) -> Var:
    """
    Elementwise difference; *b* may be a row-broadcast vector.
    """
    bc = _check_binary("sub", a, b)

    return _emit("sub", (a, b), a.value - b.value, (bc,))


@defvjp("sub")
def _sub_vjp(g: Tensor, bc: bool) -> tuple[Tensor | None, ...]:
    return g, -_unbroadcast(g, bc)


def mul_elem(a: Var, b: Var) -> Var:
    """
    Elementwise (Hadamard) product; *b* may be a row-broadcast vector.
    """
    bc = _check_binary("mul_elem", a, b)

    return _emit("mul", (a, b), a.value * b.value, (a.value, b.value, bc))


@defvjp("mul")
def _mul_vjp(
    g: Tensor, a: Tensor, b: Tensor, bc: bool
) -> tuple[Tensor | None, ...]:
    return g * b, _unbroadcast(g * a, bc)


def scale(a: Var, c: float) -> Var:
    """
    Multiply by the plain number *c*.
    """
    return _emit("scale", (a,), a.value * c, (c,))


@defvjp("scale")
def _scale_vjp(g: Tensor, c: float) -> tuple[Tensor | None, ...]:
    return (g * c,)


def matmul(a: Var, b: Var) -> Var:
    """
    Matrix product of an ``m×n`` and an ``n×p`` matrix.
    """
    if len(a.shape) != 2 or len(b.shape) != 2 or a.shape[1] != b.shape[0]:
        msg = f"matmul: incompatible shapes {a.shape} and {b.shape}"
        raise ShapeError(msg)

    return _emit("matmul", (a, b), a.value @ b.value, (a.value, b.value))


@defvjp("matmul")
def _matmul_vjp(g: Tensor, a: Tensor, b: Tensor) -> tuple[Tensor | None, ...]:
    return g @ b.T, a.T @ g


def transpose(a: Var) -> Var:
    if len(a.shape) != 2:
        msg = f"transpose needs a matrix, got shape {a.shape}"
        raise ShapeError(msg)

    return _emit("transpose", (a,), a.value.T.copy())


@defvjp("transpose")
def _transpose_vjp(g: Tensor) -> tuple[Tensor | None, ...]:
    return (g.T,)


def reshape(a: Var, shape: tuple[int, ...]) -> Var:
    """
    Row-major reshape.
    """
    if math.prod(shape) != a.value.size:
        msg = f"reshape: can't view shape {a.shape} as {shape}"
        raise ShapeError(msg)

    return _emit("reshape", (a,), a.value.reshape(shape).copy(), (a.shape,))


@defvjp("reshape")
def _reshape_vjp(
    g: Tensor, shape: tuple[int, ...]
) -> tuple[Tensor | None, ...]:
    return (g.reshape(shape),)


def sum_all(a: Var) -> Var:
    """
    Sum of all entries, as a scalar.
    """
    return _emit("sum", (a,), np.asarray(a.value.sum()), (a.shape,))


@defvjp("sum")
def _sum_vjp(g: Tensor, shape: tuple[int, ...]) -> tuple[Tensor | None, ...]:
    return (np.full(shape, g, dtype=g.dtype),)


def activation(kind: str, z: Var) -> Var:
    """
    Elementwise ``tanh``, ``relu``, or ``sigmoid``.

    The derivative of ``relu`` at exactly 0 is 0.
    """
    if kind == "tanh":
        y = np.tanh(z.value)
        return _emit("tanh", (z,), y, (y,))
    if kind == "sigmoid":
        y = sigmoid(z.value)
        return _emit("sigmoid", (z,), y, (y,))
    if kind == "relu":
        if z.tape is not None:
            z.tape.note_kink(z.value)
        return _emit("relu", (z,), np.maximum(z.value, 0), (z.value > 0,))

    msg = f"unknown activation {kind!r}"
    raise InputError(msg)


@defvjp("tanh")
def _tanh_vjp(g: Tensor, y: Tensor) -> tuple[Tensor | None, ...]:
    return (g * (1 - y * y),)


@defvjp("sigmoid")
def _sigmoid_vjp(g: Tensor, y: Tensor) -> tuple[Tensor | None, ...]:
    return (g * y * (1 - y),)


@defvjp("relu")
def _relu_vjp(g: Tensor, mask: Tensor) -> tuple[Tensor | None, ...]:
    return (g * mask,)


def relu_prime(z: Var, cfg: SurrogateConfig | None = None) -> Var:
    """
    The factor ``ReLU'(z)`` used inside hand-written Jacobians.

    Its second derivative is zero almost everywhere, which would leave every
    Jacobian-based term without a training signal.  *cfg* decides how that is
    patched; see `SurrogateConfig`.  If *cfg* is `None`, the module-wide
    default from `jacncde.configure` applies.
    """
    cfg = cfg or SurrogateConfig.from_config()
    k = cfg.slope
    if cfg.mode == "replace":
        y = sigmoid(k * z.value)
        return _emit("surrogate_sigmoid", (z,), y, (y, k))

    if z.tape is not None:
        z.tape.note_kink(z.value)
    step = (z.value > 0).astype(z.value.dtype)
    if cfg.mode == "backward-only":
        return _emit("surrogate_step", (z,), step, (z.value, k))

    return _emit("heaviside", (z,), step)


@defvjp("surrogate_sigmoid")
def _surrogate_sigmoid_vjp(
    g: Tensor, y: Tensor, k: float
) -> tuple[Tensor | None, ...]:
    return (g * k * y * (1 - y),)


@defvjp("surrogate_step")
def _surrogate_step_vjp(
    g: Tensor, z: Tensor, k: float
) -> tuple[Tensor | None, ...]:
    s = sigmoid(k * z)

    return (g * k * s * (1 - s),)


@defvjp("heaviside")
def _heaviside_vjp(g: Tensor) -> tuple[Tensor | None, ...]:
    return (None,)


def cross_entropy(logits: Var, labels: Labels | Sequence[int]) -> Var:
    """
    Mean over rows of ``-log softmax(logits)[label]``.

    A vector of logits is treated as a single row.  The softmax is stabilized
    by subtracting the row maximum.

    Raises:
        InputError: If a label is outside ``[0, C)``.
        ShapeError: If there isn't exactly one label per row.
    """
    z = logits.value if len(logits.shape) == 2 else logits.value[None, :]
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, c = z.shape
    if y.shape[0] != n:
        msg = f"cross_entropy: {y.shape[0]} label(s) for logits of shape {logits.shape}"
        raise ShapeError(msg)
    if np.any(y < 0) or np.any(y >= c):
        msg = f"labels must lie in [0, {c}), got {y.tolist()}"
        raise InputError(msg)

    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = np.mean(lse - shifted[rows, y])

    p = np.exp(shifted - lse[:, None])
    onehot = np.zeros_like(p)
    onehot[rows, y] = 1

    return _emit(
        "cross_entropy",
        (logits,),
        np.asarray(loss, dtype=z.dtype),
        ((p - onehot) / n, logits.shape),
    )


@defvjp("cross_entropy")
def _cross_entropy_vjp(
    g: Tensor, dz: Tensor, shape: tuple[int, ...]
) -> tuple[Tensor | None, ...]:
    return ((g * dz).reshape(shape),)


def backward(tape: Tape, seed: Var) -> dict[int, Tensor]:
    """
    Differentiate the scalar *seed* and return gradients of every leaf.

    Returns:
        Mapping of leaf node id to gradient.  Leaves the seed doesn't depend
        on map to zeros.
    """
    tape.backward(seed)

    rv = {}
    for i, node in enumerate(tape.nodes):
        if node.kind != "leaf":
            continue
        g = tape._grads[i] if i < len(tape._grads) else None
        rv[i] = g if g is not None else np.zeros(*node.saved)

    return rv
