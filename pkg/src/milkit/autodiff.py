"""Reverse-mode automatic differentiation over dense float64 matrices.

Define-by-run tape: every op executes eagerly through the active kernel
backend and appends one record to its graph. Because records are appended in
execution order, the tape is already topologically sorted and ``backward``
simply replays it in exact reverse order, accumulating gradients additively
(fan-out just works; calling ``backward`` twice without a reset doubles every
gradient).

Scope is deliberately small: 2-D tensors only, no broadcasting beyond
row-vector bias addition, no higher-order derivatives.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import DimensionError, GraphError, NumericError, ValidationError

_node_counter = itertools.count()

ACTIVATION_KINDS = ("tanh", "relu")
REDUCE_KINDS = ("sum", "mean", "max")


class Tensor:
    """Matrix node: float64 values plus a same-shape accumulated gradient.

    The gradient buffer is allocated lazily on first access so that
    forward-only passes never pay for it; reading ``grad`` always yields a
    zero-initialized array until backward writes into it.
    """

    __slots__ = ("values", "node_id", "_grad")

    def __init__(self, values):
        arr = np.ascontiguousarray(values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise DimensionError(f"tensors are 2-D matrices, got ndim={arr.ndim}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"tensor dimensions must be positive, got {arr.shape}")
        self.values = arr
        self.node_id = next(_node_counter)
        self._grad = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.values)
        return self._grad

    @grad.setter
    def grad(self, value) -> None:
        # supports `t.grad += delta`; the shape invariant must survive it
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.values.shape:
            raise DimensionError(
                f"gradient shape {value.shape} does not match values {self.values.shape}"
            )
        self._grad = value

    def zero_grad(self) -> None:
        if self._grad is not None:
            self._grad.fill(0.0)

    def item(self) -> float:
        if self.values.size != 1:
            raise GraphError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def is_vector(self) -> bool:
        return self.shape[0] == 1 or self.shape[1] == 1

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, node_id={self.node_id})"


@dataclass
class OpRecord:
    kind: str
    input_ids: tuple[int, ...]
    output_id: int
    backward_fn: Callable[[], None]


@dataclass
class Graph:
    """Execution tape. Input node ids always precede their consumers."""

    ops: list[OpRecord] = field(default_factory=list)

    def _record(self, kind: str, inputs: tuple[Tensor, ...], out: Tensor, bwd) -> Tensor:
        self.ops.append(
            OpRecord(kind, tuple(t.node_id for t in inputs), out.node_id, bwd)
        )
        self._tensors.update((t.node_id, t) for t in inputs)
        self._tensors[out.node_id] = out
        return out

    def __post_init__(self):
        self._tensors: dict[int, Tensor] = {}

    # -- ops ---------------------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[1] != b.shape[0]:
            raise DimensionError(
                f"matmul: inner dimensions differ, {a.shape} x {b.shape}"
            )
        out = Tensor(kernels.matmul(a.values, b.values))

        def bwd():
            kernels.matmul_bwd(a.values, b.values, out.grad, a.grad, b.grad)

        return self._record("matmul", (a, b), out, bwd)

    def transpose(self, a: Tensor) -> Tensor:
        out = Tensor(np.ascontiguousarray(a.values.T))

        def bwd():
            a.grad += out.grad.T

        return self._record("transpose", (a,), out, bwd)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise sum; b may also be a row vector added to every row of a."""
        if a.shape == b.shape:
            out = Tensor(a.values + b.values)

            def bwd():
                a.grad += out.grad
                b.grad += out.grad

        elif b.shape == (1, a.shape[1]):
            out = Tensor(kernels.add_bias_fwd(a.values, b.values))

            def bwd():
                kernels.add_bias_bwd(out.grad, a.grad, b.grad)

        else:
            raise DimensionError(
                f"add: shapes {a.shape} and {b.shape} are neither equal nor "
                "matrix-plus-row-vector"
            )
        return self._record("add", (a, b), out, bwd)

    def scale(self, a: Tensor, c: float) -> Tensor:
        c = float(c)
        out = Tensor(a.values * c)

        def bwd():
            a.grad += c * out.grad

        return self._record("scale", (a,), out, bwd)

    def activation(self, a: Tensor, kind: str) -> Tensor:
        if kind == "tanh":
            out = Tensor(kernels.tanh_fwd(a.values))

            def bwd():
                kernels.tanh_bwd(out.values, out.grad, a.grad)

        elif kind == "relu":
            out = Tensor(kernels.relu_fwd(a.values))

            def bwd():
                kernels.relu_bwd(out.values, out.grad, a.grad)

        else:
            raise ValidationError(
                f"unknown activation kind {kind!r}; expected one of {ACTIVATION_KINDS}"
            )
        return self._record(kind, (a,), out, bwd)

    def tanh(self, a: Tensor) -> Tensor:
        return self.activation(a, "tanh")

    def relu(self, a: Tensor) -> Tensor:
        return self.activation(a, "relu")

    def softmax(self, a: Tensor) -> Tensor:
        """Softmax over all entries of a vector-shaped (1xK or Kx1) tensor."""
        if not a.is_vector():
            raise DimensionError(f"softmax needs a vector-shaped tensor, got {a.shape}")
        if not np.isfinite(a.values).all():
            raise NumericError("softmax input contains non-finite values")
        out = Tensor(kernels.softmax_fwd(a.values))

        def bwd():
            kernels.softmax_bwd(out.values, out.grad, a.grad)

        return self._record("softmax", (a,), out, bwd)

    def reduce(self, a: Tensor, kind: str) -> Tensor:
        """Columnwise reduction KxH -> 1xH over the instance axis."""
        if kind == "sum":
            out = Tensor(kernels.reduce_sum_fwd(a.values))

            def bwd():
                kernels.reduce_sum_bwd(out.grad, a.grad)

        elif kind == "mean":
            out = Tensor(kernels.reduce_mean_fwd(a.values))

            def bwd():
                kernels.reduce_mean_bwd(out.grad, a.grad)

        elif kind == "max":
            values, rows = kernels.reduce_max_fwd(a.values)
            out = Tensor(values)

            def bwd():
                kernels.reduce_max_bwd(out.grad, rows, a.grad)

        else:
            raise ValidationError(
                f"unknown reduce kind {kind!r}; expected one of {REDUCE_KINDS}"
            )
        return self._record(f"reduce_{kind}", (a,), out, bwd)

    def sum_all(self, a: Tensor) -> Tensor:
        """Sum of every entry, as a 1x1 tensor (handy for scalar losses)."""
        out = Tensor([[float(a.values.sum())]])

        def bwd():
            a.grad += out.grad[0, 0]

        return self._record("sum_all", (a,), out, bwd)

    def custom(self, kind: str, inputs: tuple[Tensor, ...], out_values, backward) -> Tensor:
        """Append a caller-defined op.

        `backward` receives the output tensor and must accumulate into the
        input tensors' ``grad`` buffers.
        """
        out = Tensor(out_values)
        return self._record(kind, tuple(inputs), out, lambda: backward(out))

    # -- traversal ----------------------------------------------------------

    def backward(self, loss: Tensor) -> None:
        """Populate gradients of `loss` w.r.t. every tensor on the tape."""
        if loss.shape != (1, 1):
            raise GraphError(f"backward needs a 1x1 scalar loss, got {loss.shape}")
        # += rather than = : a second backward without reset doubles gradients
        loss.grad[0, 0] += 1.0
        for rec in reversed(self.ops):
            rec.backward_fn()

    def reset_grads(self) -> None:
        """Zero the gradient of every tensor this graph has touched."""
        for t in self._tensors.values():
            t.zero_grad()
