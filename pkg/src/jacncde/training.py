# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

"""
The classifier (lift, integrate, read out), its loss, and the loops that
train and evaluate it.

A mini-batch is split into groups of samples that share their knot grid.
Each group is one batched forward pass on its own tape; groups may run on a
thread pool and their gradients are summed in group order afterwards, so the
result doesn't depend on scheduling.
"""

from __future__ import annotations

import dataclasses
import math
import sys
import time

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Any, Iterator, Mapping, Sequence

import numpy as np
import structlog

from ._config import _CONFIG
from ._utils import philox
from .autodiff import (
    SurrogateConfig,
    Tape,
    Var,
    add,
    as_tensor,
    const,
    cross_entropy,
    matmul,
    scale,
    transpose,
)
from .data import Dataset
from .exceptions import ConfigError, ContractError, InputError, NumericError
from .fields import (
    FIELD_KINDS,
    count_params,
    init_arrays,
    make_field,
    params_from_arrays,
)
from .interpolation import (
    INTERPOLATION_KINDS,
    CubicPath,
    TimeSeriesSample,
    fit,
)
from .odesolver import SolverConfig, integrate
from .typing import Labels, Tensor


if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self


__all__ = [
    "AdamState",
    "EpochMetrics",
    "EvalResult",
    "Model",
    "ModelConfig",
    "TrainReport",
    "adam_step",
    "batch_loss",
    "evaluate",
    "forward",
    "init_model",
    "loss_ce",
    "set_seed",
    "softmax",
    "train",
]

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    """
    Architecture of a classifier.

    Args:
        u: Input channels (after preprocessing, so time included).

        v: Hidden state size.

        d: Width of the field's inner layer.

        field: One of ``"matrix"``, ``"jacobian-truncated"``,
            ``"jacobian-exact"``.  The last one can be evaluated but not
            trained.

        classes: Number of classes *C*.

        solver: How to integrate.

        surrogate: How ``relu'`` is produced inside the Jacobian fields.

        interpolation: ``"natural-cubic"`` or ``"hermite"``.

    Raises:
        ConfigError: For non-positive sizes or unknown kinds.
    """

    u: int
    v: int = 16
    d: int = 32
    field: str = "jacobian-truncated"
    classes: int = 2
    solver: SolverConfig = dataclasses.field(default_factory=SolverConfig)
    surrogate: SurrogateConfig = dataclasses.field(
        default_factory=SurrogateConfig.from_config
    )
    interpolation: str = "natural-cubic"

    def __post_init__(self) -> None:
        for name in ("u", "v", "d", "classes"):
            if getattr(self, name) < 1:
                msg = f"{name} must be positive, not {getattr(self, name)!r}"
                raise ConfigError(msg)
        if self.field not in FIELD_KINDS:
            msg = f"field must be one of {FIELD_KINDS}, not {self.field!r}"
            raise ConfigError(msg)
        if self.interpolation not in INTERPOLATION_KINDS:
            msg = f"interpolation must be one of {INTERPOLATION_KINDS}, not {self.interpolation!r}"
            raise ConfigError(msg)

    @property
    def param_count(self) -> int:
        return count_params(self.field, self.u, self.v, self.d, self.classes)

    def check_trainable(self) -> None:
        """
        Raises:
            ContractError: For the forward-only ``jacobian-exact`` field.
        """
        if self.field == "jacobian-exact":
            msg = "the jacobian-exact field is forward-only; can't train it"
            raise ContractError(msg)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ModelConfig:
        d = dict(d)
        try:
            d["solver"] = SolverConfig(**d.get("solver", {}))
            d["surrogate"] = SurrogateConfig(**d.get("surrogate", {}))
            return cls(**d)
        except TypeError as e:
            raise ConfigError(f"invalid model config: {e}") from None


@dataclass(frozen=True)
class Model:
    """
    A configuration plus parameter arrays, by name.

    Parameter names are ``lift.W``/``lift.b`` (the map ``X(t1) -> h0``),
    ``field.*`` and ``readout.W``/``readout.b``.  Arrays are read-only; the
    optimizer replaces them.
    """

    config: ModelConfig
    params: Mapping[str, Tensor]

    def with_params(self, params: Mapping[str, Tensor]) -> Self:
        return replace(self, params=dict(params))

    def with_config(self, **changes: Any) -> Self:
        """
        Same parameters under a changed config, e.g. to evaluate a
        jacobian-truncated model with the exact field.
        """
        return replace(self, config=replace(self.config, **changes))


def set_seed(seed: int) -> np.random.Generator:
    """
    Return the counter-based generator that every random choice of a run
    derives from.

    Seeds are taken modulo 2**64.
    """
    return philox(seed)


def init_model(cfg: ModelConfig, rng: np.random.Generator) -> Model:
    """
    Draw fresh parameters: weights uniform in ``±1/sqrt(fan_in)``, biases 0.
    """
    u, v, d, c = cfg.u, cfg.v, cfg.d, cfg.classes
    arrays: dict[str, Any] = {}
    for name, a in init_arrays(cfg.field, u, v, d, rng).items():
        arrays[f"field.{name}"] = a
    bound = 1 / math.sqrt(u)
    arrays["lift.W"] = rng.uniform(-bound, bound, size=(v, u))
    arrays["lift.b"] = np.zeros(v)
    bound = 1 / math.sqrt(v)
    arrays["readout.W"] = rng.uniform(-bound, bound, size=(c, v))
    arrays["readout.b"] = np.zeros(c)

    return Model(cfg, {k: as_tensor(a) for k, a in sorted(arrays.items())})


def _bind(model: Model, tape: Tape | None) -> dict[str, Var]:
    if tape is None:
        return {k: const(a) for k, a in model.params.items()}

    return {k: tape.leaf(a) for k, a in model.params.items()}


def batch_logits(
    cfg: ModelConfig, bound: Mapping[str, Var], path: CubicPath
) -> Var:
    """
    Logits for every series of the (stacked) *path*, one row each.
    """
    x0, _ = path(path.knots[0])
    x0v = const(x0 if x0.ndim == 2 else x0[None, :])
    h0 = add(matmul(x0v, transpose(bound["lift.W"])), bound["lift.b"])

    prefix = "field."
    fp = params_from_arrays(
        cfg.field,
        {
            k[len(prefix) :]: v
            for k, v in bound.items()
            if k.startswith(prefix)
        },
    )

    h_final = integrate(
        make_field(cfg.field, fp, path, cfg.surrogate),
        h0,
        path.knots,
        cfg.solver,
    ).final

    return add(
        matmul(h_final, transpose(bound["readout.W"])), bound["readout.b"]
    )


def loss_ce(logits: Var, label: int | Sequence[int] | Labels) -> Var:
    """
    Cross-entropy ``-log softmax(logits)[label]``, averaged over rows.

    Raises:
        InputError: If a label is outside ``[0, C)``.
    """
    return cross_entropy(logits, np.atleast_1d(np.asarray(label)))


def softmax(logits: Tensor) -> Tensor:
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))

    return e / e.sum(axis=-1, keepdims=True)  # type: ignore[no-any-return]


def batch_loss(
    cfg: ModelConfig,
    bound: Mapping[str, Var],
    path: CubicPath,
    labels: Labels | Sequence[int],
) -> Var:
    """
    Mean cross-entropy of the series in *path*; the scalar that training
    differentiates.
    """
    return loss_ce(batch_logits(cfg, bound, path), labels)


def forward(
    model: Model, sample: TimeSeriesSample, *, sample_id: Any = None
) -> Tensor:
    """
    Logits of a single preprocessed *sample*, as a *C*-vector.

    Raises:
        NumericError:
            If integration blows up; the context carries *sample_id*.
    """
    path = fit(sample, model.config.interpolation)
    try:
        logits = batch_logits(model.config, _bind(model, None), path)
    except NumericError as e:
        raise e.with_context(sample=sample_id) from None

    return logits.value[0]  # type: ignore[no-any-return]


def _groups(
    ids: Sequence[int], samples: Sequence[TimeSeriesSample]
) -> list[list[int]]:
    """
    Partition *ids* by knot grid, in order of first appearance.
    """
    groups: dict[bytes, list[int]] = {}
    for i in ids:
        groups.setdefault(samples[i].times.tobytes(), []).append(i)

    return list(groups.values())


def _map(fn: Any, items: Sequence[Any]) -> Iterator[Any]:
    workers = _CONFIG.workers
    if workers <= 1 or len(items) <= 1:
        return map(fn, items)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return iter(list(pool.map(fn, items)))


class _GroupResult:
    __slots__ = ("correct", "grads", "loss")

    def __init__(
        self, loss: float, correct: int, grads: dict[str, Tensor] | None
    ):
        self.loss = loss
        self.correct = correct
        self.grads = grads


def _run_groups(
    model: Model,
    samples: Sequence[TimeSeriesSample],
    paths: Sequence[CubicPath],
    ids: Sequence[int],
    *,
    differentiate: bool,
) -> tuple[float, int, dict[str, Tensor] | None]:
    """
    Mean loss, number of correct predictions and (optionally) the gradient
    of the mean loss over *ids*.
    """
    cfg = model.config
    n = len(ids)

    def one(group: list[int]) -> _GroupResult:
        tape = Tape() if differentiate else None
        bound = _bind(model, tape)
        path = CubicPath.stack([paths[i] for i in group])
        labels = np.array([samples[i].label for i in group], dtype=np.int64)
        try:
            logits = batch_logits(cfg, bound, path)
        except NumericError as e:
            raise e.with_context(samples=list(group)) from None
        loss = scale(cross_entropy(logits, labels), len(group) / n)
        correct = int(np.sum(np.argmax(logits.value, axis=1) == labels))

        grads = None
        if tape is not None:
            tape.backward(loss)
            grads = {k: tape.grad(v) for k, v in bound.items()}

        return _GroupResult(float(loss.value), correct, grads)

    total_loss = 0.0
    correct = 0
    grads: dict[str, Tensor] | None = None
    for r in _map(one, _groups(ids, samples)):
        total_loss += r.loss
        correct += r.correct
        if r.grads is not None:
            if grads is None:
                grads = r.grads
            else:
                grads = {k: grads[k] + g for k, g in r.grads.items()}

    return total_loss, correct, grads


@dataclass
class AdamState:
    """
    Moments per parameter name, plus hyperparameters.
    """

    m: dict[str, Tensor]
    v: dict[str, Tensor]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(
        cls, params: Mapping[str, Tensor], lr: float = 1e-3
    ) -> AdamState:
        return cls(
            {k: np.zeros_like(a) for k, a in params.items()},
            {k: np.zeros_like(a) for k, a in params.items()},
            lr=lr,
        )


def adam_step(
    params: Mapping[str, Tensor], grads: Mapping[str, Tensor], state: AdamState
) -> dict[str, Tensor]:
    """
    Apply one bias-corrected Adam update and return new parameter arrays.

    *state* is advanced in place; *params* are left untouched.
    """
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step

    new = {}
    for k, p in params.items():
        g = grads[k]
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * (g * g)
        denom = np.sqrt(state.v[k] / bc2) + state.eps
        new[k] = as_tensor(p - (state.lr / bc1) * state.m[k] / denom, p.dtype)

    return new


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    loss: float
    count: int


def evaluate(
    model: Model,
    samples: Sequence[TimeSeriesSample],
    *,
    paths: Sequence[CubicPath] | None = None,
    chunk: int = 64,
) -> EvalResult:
    """
    Argmax accuracy and mean cross-entropy over *samples*.

    Deterministic for fixed parameters and data.  An empty *samples* gives
    NaNs.
    """
    if not samples:
        return EvalResult(math.nan, math.nan, 0)
    paths = paths or [fit(s, model.config.interpolation) for s in samples]

    loss = 0.0
    correct = 0
    ids = list(range(len(samples)))
    for start in range(0, len(ids), chunk):
        part = ids[start : start + chunk]
        part_loss, part_correct, _ = _run_groups(
            model, samples, paths, part, differentiate=False
        )
        loss += part_loss * len(part)
        correct += part_correct

    n = len(samples)

    return EvalResult(correct / n, loss / n, n)


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainReport:
    """
    Everything a training run produced.

    *model* holds the parameters of the best validation epoch (the last
    epoch if there's no validation split); it's not serialized.
    """

    epochs: list[EpochMetrics]
    wall_time: float
    test_accuracy: float
    test_loss: float
    param_count: int
    best_epoch: int
    seed: int | None = None
    model: Model | None = dataclasses.field(
        default=None, repr=False, compare=False
    )

    def to_dict(self) -> dict[str, Any]:
        return {
            "epochs": [asdict(e) for e in self.epochs],
            "wall_time": self.wall_time,
            "test_accuracy": self.test_accuracy,
            "test_loss": self.test_loss,
            "param_count": self.param_count,
            "best_epoch": self.best_epoch,
            "seed": self.seed,
            "field": self.model.config.field if self.model else None,
        }


def train(
    model: Model,
    dataset: Dataset,
    epochs: int = 30,
    batch: int = 32,
    lr: float = 1e-3,
    *,
    rng: np.random.Generator,
    seed: int | None = None,
) -> TrainReport:
    """
    Train *model* with Adam on the train split of *dataset*.

    Every mini-batch gradient is the gradient of the batch-mean loss.  After
    each epoch the validation split is evaluated and the best epoch's
    parameters are kept for the final test evaluation.

    Raises:
        ContractError: For a ``jacobian-exact`` model.

        InputError: If *dataset* has no train samples.

        NumericError: On a non-finite loss, with epoch and batch context.
    """
    model.config.check_trainable()
    if epochs < 0 or batch < 1 or lr < 0:
        msg = (
            "need epochs >= 0, batch >= 1 and lr >= 0, got "
            f"{epochs}, {batch}, {lr}"
        )
        raise InputError(msg)

    train_ids = dataset.indices("train")
    if not train_ids:
        msg = "dataset has no training samples"
        raise InputError(msg)
    samples = dataset.samples
    kind = model.config.interpolation
    paths = [fit(s, kind) for s in samples]
    val = [samples[i] for i in dataset.indices("val")]
    val_paths = [paths[i] for i in dataset.indices("val")]
    test = [samples[i] for i in dataset.indices("test")]
    test_paths = [paths[i] for i in dataset.indices("test")]

    start = time.perf_counter()
    state = AdamState.for_params(model.params, lr=lr)
    params = dict(model.params)
    best = model
    best_key: tuple[float, float] | None = None
    best_epoch = 0
    history = []

    for epoch in range(1, epochs + 1):
        order = [train_ids[i] for i in rng.permutation(len(train_ids))]
        loss_sum = 0.0
        correct = 0
        for b, at in enumerate(range(0, len(order), batch)):
            ids = order[at : at + batch]
            current = model.with_params(params)
            try:
                loss, ok, grads = _run_groups(
                    current, samples, paths, ids, differentiate=True
                )
            except NumericError as e:
                raise e.with_context(epoch=epoch, batch=b) from None
            if not math.isfinite(loss):
                msg = "training loss is not finite"
                raise NumericError(
                    msg, {"epoch": epoch, "batch": b, "samples": ids}
                )

            assert grads is not None
            params = adam_step(params, grads, state)
            loss_sum += loss * len(ids)
            correct += ok

        current = model.with_params(params)
        v = evaluate(current, val, paths=val_paths)
        metrics = EpochMetrics(
            epoch,
            loss_sum / len(order),
            correct / len(order),
            v.loss,
            v.accuracy,
        )
        history.append(metrics)
        logger.info(
            "epoch_finished",
            epoch=epoch,
            train_loss=metrics.train_loss,
            train_accuracy=metrics.train_accuracy,
            val_accuracy=metrics.val_accuracy,
        )

        key = (v.accuracy, -v.loss) if val else (float(epoch), 0.0)
        if best_key is None or key > best_key:
            best_key = key
            best = current
            best_epoch = epoch

    t = evaluate(best, test, paths=test_paths)

    return TrainReport(
        epochs=history,
        wall_time=time.perf_counter() - start,
        test_accuracy=t.accuracy,
        test_loss=t.loss,
        param_count=model.config.param_count,
        best_epoch=best_epoch,
        seed=seed,
        model=best,
    )
