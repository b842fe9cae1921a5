"""MIL models built on the autodiff graph.

Two families:

* ``multi_attention`` — three FC+ReLU stages, each followed by a softmax
  attention pooling layer; the three pooled vectors are accumulated by
  elementwise sum (residual skip) and fed to a 2-logit softmax head.
* ``minet_max`` / ``minet_mean`` — per-instance FC stack (widths 256/128/64
  by default), columnwise max or mean pooling, then the same 2-logit head.

Parameters are persistent tensors reused across per-bag graphs; a forward
pass builds a fresh graph each time (bag size K varies).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import sqrt

import numpy as np

from .autodiff import Graph, Tensor
from .errors import DataError, DimensionError, EmptyBagError, ValidationError
from .rng import Xoshiro256StarStar

MODEL_KINDS = ("multi_attention", "minet_max", "minet_mean")

ATTENTION_SUM_TOL = 1e-6


@dataclass
class Bag:
    """One MIL example: a KxD instance matrix with a single binary label.

    ``instance_refs`` optionally names each instance (source patch, digit
    provenance, ...) so attention scores can be traced back for
    interpretability.
    """

    id: str
    instances: np.ndarray
    label: int
    instance_refs: list[str] | None = None

    def __post_init__(self):
        arr = np.ascontiguousarray(self.instances, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"bag {self.id!r}: instances must be KxD, got ndim={arr.ndim}")
        if arr.shape[0] < 1:
            raise EmptyBagError(f"bag {self.id!r} has no instances")
        if self.label not in (0, 1):
            raise ValidationError(f"bag {self.id!r}: label must be 0 or 1, got {self.label!r}")
        if self.instance_refs is not None and len(self.instance_refs) != arr.shape[0]:
            raise ValidationError(
                f"bag {self.id!r}: {len(self.instance_refs)} instance_refs for "
                f"{arr.shape[0]} instances"
            )
        self.instances = arr
        self.label = int(self.label)

    @property
    def num_instances(self) -> int:
        return self.instances.shape[0]

    @property
    def dim(self) -> int:
        return self.instances.shape[1]


@dataclass
class AttentionRecord:
    """Per-layer attention vectors for one bag (each length K, sums to 1)."""

    layer_scores: list[np.ndarray]

    def __post_init__(self):
        for i, a in enumerate(self.layer_scores):
            a = np.asarray(a, dtype=np.float64).reshape(-1)
            if (a < 0).any():
                raise ValidationError(f"attention layer {i + 1} has negative entries")
            if abs(a.sum() - 1.0) > ATTENTION_SUM_TOL:
                raise ValidationError(
                    f"attention layer {i + 1} sums to {a.sum()!r}, not 1"
                )
            self.layer_scores[i] = a


@dataclass
class LinearParams:
    weight: Tensor  # [n_in x n_out]
    bias: Tensor  # [1 x n_out]


@dataclass
class AttentionParams:
    """Trainable attention pooling parameters: V [LxM], w [Lx1]."""

    V: Tensor
    w: Tensor

    def __post_init__(self):
        if self.w.shape != (self.V.shape[0], 1):
            raise DimensionError(
                f"attention params inconsistent: V {self.V.shape}, w {self.w.shape}"
            )

    @property
    def hidden_width(self) -> int:  # L
        return self.V.shape[0]

    @property
    def input_width(self) -> int:  # M
        return self.V.shape[1]


@dataclass
class MultiAttentionParams:
    fc1: LinearParams
    fc2: LinearParams
    fc3: LinearParams
    att1: AttentionParams
    att2: AttentionParams
    att3: AttentionParams
    head: LinearParams

    kind = "multi_attention"

    @property
    def input_dim(self) -> int:
        return self.fc1.weight.shape[0]

    @property
    def hidden(self) -> int:
        return self.fc1.weight.shape[1]

    @property
    def attention_width(self) -> int:
        return self.att1.hidden_width

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        """Checkpoint/init order; gradients and Adam state follow it too."""
        return [
            ("fc1.weight", self.fc1.weight),
            ("fc1.bias", self.fc1.bias),
            ("fc2.weight", self.fc2.weight),
            ("fc2.bias", self.fc2.bias),
            ("fc3.weight", self.fc3.weight),
            ("fc3.bias", self.fc3.bias),
            ("att1.V", self.att1.V),
            ("att1.w", self.att1.w),
            ("att2.V", self.att2.V),
            ("att2.w", self.att2.w),
            ("att3.V", self.att3.V),
            ("att3.w", self.att3.w),
            ("head.weight", self.head.weight),
            ("head.bias", self.head.bias),
        ]


@dataclass
class MiNetParams:
    fcs: tuple[LinearParams, LinearParams, LinearParams]
    head: LinearParams
    pool: str  # "max" or "mean"

    def __post_init__(self):
        if self.pool not in ("max", "mean"):
            raise ValidationError(f"MI-Net pool must be 'max' or 'mean', got {self.pool!r}")

    @property
    def kind(self) -> str:
        return f"minet_{self.pool}"

    @property
    def input_dim(self) -> int:
        return self.fcs[0].weight.shape[0]

    @property
    def widths(self) -> tuple[int, int, int]:
        return tuple(fc.weight.shape[1] for fc in self.fcs)

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, fc in enumerate(self.fcs, start=1):
            out.append((f"fc{i}.weight", fc.weight))
            out.append((f"fc{i}.bias", fc.bias))
        out.append(("head.weight", self.head.weight))
        out.append(("head.bias", self.head.bias))
        return out


ModelParams = MultiAttentionParams | MiNetParams


# -- initialization ----------------------------------------------------------


def _uniform_matrix(rng: Xoshiro256StarStar, rows: int, cols: int, bound: float) -> Tensor:
    vals = [rng.uniform(-bound, bound) for _ in range(rows * cols)]
    return Tensor(np.array(vals, dtype=np.float64).reshape(rows, cols))


def _glorot(rng, rows, cols, fan_in, fan_out) -> Tensor:
    return _uniform_matrix(rng, rows, cols, sqrt(6.0 / (fan_in + fan_out)))


def _init_linear(rng, n_in: int, n_out: int) -> LinearParams:
    return LinearParams(
        weight=_glorot(rng, n_in, n_out, n_in, n_out),
        bias=Tensor(np.zeros((1, n_out))),
    )


def _init_attention(rng, m: int, l: int) -> AttentionParams:
    return AttentionParams(
        V=_glorot(rng, l, m, m, l),
        w=_glorot(rng, l, 1, l, 1),
    )


def _check_positive_dims(**dims):
    for name, value in dims.items():
        if int(value) < 1:
            raise ValidationError(f"{name} must be a positive integer, got {value}")


def init_multi_attention(
    input_dim: int, hidden: int = 256, attention_width: int = 128, seed: int = 0
) -> MultiAttentionParams:
    """Glorot-uniform weights, zero biases, drawn from the 'init' substream.

    Draw order is the ``named_tensors`` order, each tensor row-major, so the
    same seed always reproduces the same parameters byte for byte.
    """
    _check_positive_dims(input_dim=input_dim, hidden=hidden, attention_width=attention_width)
    rng = Xoshiro256StarStar(seed).substream("init")
    return MultiAttentionParams(
        fc1=_init_linear(rng, input_dim, hidden),
        fc2=_init_linear(rng, hidden, hidden),
        fc3=_init_linear(rng, hidden, hidden),
        att1=_init_attention(rng, hidden, attention_width),
        att2=_init_attention(rng, hidden, attention_width),
        att3=_init_attention(rng, hidden, attention_width),
        head=_init_linear(rng, hidden, 2),
    )


def init_minet(
    input_dim: int,
    widths: tuple[int, int, int] = (256, 128, 64),
    pool: str = "max",
    seed: int = 0,
) -> MiNetParams:
    widths = tuple(int(w) for w in widths)
    if len(widths) != 3:
        raise ValidationError(f"MI-Net takes exactly three layer widths, got {widths}")
    _check_positive_dims(input_dim=input_dim, **{f"width{i}": w for i, w in enumerate(widths)})
    rng = Xoshiro256StarStar(seed).substream("init")
    fcs = []
    n_in = input_dim
    for w in widths:
        fcs.append(_init_linear(rng, n_in, w))
        n_in = w
    return MiNetParams(fcs=tuple(fcs), head=_init_linear(rng, widths[-1], 2), pool=pool)


def init_params(
    kind: str,
    input_dim: int,
    seed: int = 0,
    hidden: int = 256,
    attention_width: int = 128,
    minet_widths: tuple[int, int, int] = (256, 128, 64),
) -> ModelParams:
    if kind == "multi_attention":
        return init_multi_attention(input_dim, hidden, attention_width, seed)
    if kind in ("minet_max", "minet_mean"):
        return init_minet(input_dim, minet_widths, kind.removeprefix("minet_"), seed)
    raise ValidationError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


# -- forward passes ----------------------------------------------------------


def _linear(g: Graph, x: Tensor, p: LinearParams) -> Tensor:
    return g.add(g.matmul(x, p.weight), p.bias)


def attention_pool(g: Graph, h: Tensor, p: AttentionParams) -> tuple[Tensor, Tensor]:
    """Softmax attention pooling of embeddings h [KxM] -> (z [1xM], a [Kx1]).

    Scores are w' tanh(V h_k'); softmax over k normalizes them to weights
    that sum to one; z is the weighted sum of the rows of h.
    """
    if h.shape[1] != p.input_width:
        raise DimensionError(
            f"attention_pool: embeddings have width {h.shape[1]}, params expect "
            f"{p.input_width}"
        )
    scores = g.matmul(g.tanh(g.matmul(h, g.transpose(p.V))), p.w)  # [Kx1]
    a = g.softmax(scores)
    z = g.matmul(g.transpose(a), h)  # [1xM]
    return z, a


def _bag_input(g: Graph, bag: Bag, params) -> Tensor:
    if bag.dim != params.input_dim:
        raise DimensionError(
            f"bag {bag.id!r} has feature width {bag.dim}, model expects {params.input_dim}"
        )
    return Tensor(bag.instances)


def _dropout(g: Graph, x: Tensor, rate: float, rng) -> Tensor:
    if rate <= 0.0:
        return x
    if not 0.0 < rate < 1.0:
        raise ValidationError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ValidationError("dropout requires an rng stream")
    keep = 1.0 - rate
    rows, cols = x.shape
    mask = np.array(
        [0.0 if rng.random() < rate else 1.0 / keep for _ in range(rows * cols)]
    ).reshape(rows, cols)

    def bwd(out):
        x.grad += out.grad * mask

    return g.custom("dropout", (x,), x.values * mask, bwd)


def forward_multi_attention(
    g: Graph,
    bag: Bag,
    p: MultiAttentionParams,
    dropout: float = 0.0,
    rng=None,
) -> tuple[Tensor, list[Tensor]]:
    """Forward pass -> (prob [1x2], attention vectors [a1, a2, a3], each [Kx1]).

    ReLU after every FC except the head; the three pooled vectors are summed
    before classification.
    """
    x = _bag_input(g, bag, p)
    h1 = _dropout(g, g.relu(_linear(g, x, p.fc1)), dropout, rng)
    z1, a1 = attention_pool(g, h1, p.att1)
    h2 = _dropout(g, g.relu(_linear(g, h1, p.fc2)), dropout, rng)
    z2, a2 = attention_pool(g, h2, p.att2)
    h3 = _dropout(g, g.relu(_linear(g, h2, p.fc3)), dropout, rng)
    z3, a3 = attention_pool(g, h3, p.att3)
    z = g.add(g.add(z1, z2), z3)
    prob = g.softmax(_linear(g, z, p.head))
    return prob, [a1, a2, a3]


def forward_minet(
    g: Graph, bag: Bag, p: MiNetParams, activation: str = "relu"
) -> Tensor:
    """Per-instance FC stack, columnwise max/mean pooling, softmax head.

    `activation="identity"` skips the nonlinearity (used to validate the
    linear-regime behaviour of mean pooling).
    """
    if activation not in ("relu", "identity"):
        raise ValidationError(f"unsupported MI-Net activation {activation!r}")
    h = _bag_input(g, bag, p)
    for fc in p.fcs:
        h = _linear(g, h, fc)
        if activation == "relu":
            h = g.relu(h)
    pooled = g.reduce(h, p.pool)
    return g.softmax(_linear(g, pooled, p.head))


def forward(g: Graph, bag: Bag, params: ModelParams, dropout: float = 0.0, rng=None):
    """Kind dispatch -> (prob tensor, attention tensors or None)."""
    if isinstance(params, MultiAttentionParams):
        return forward_multi_attention(g, bag, params, dropout=dropout, rng=rng)
    return forward_minet(g, bag, params), None


def predict(bag: Bag, params: ModelParams) -> tuple[np.ndarray, AttentionRecord | None]:
    """Inference on a throwaway graph -> (probs [2], attention record or None)."""
    prob, atts = forward(Graph(), bag, params)
    record = None
    if atts is not None:
        record = AttentionRecord([a.values.reshape(-1).copy() for a in atts])
    return prob.values.reshape(-1).copy(), record


# -- checkpoint format --------------------------------------------------------
#
# [magic "MILCKPT1"][u32 kind tag][u32 dims...][tensor payload]
# kind 1 = multi_attention, dims = D, H, L
# kind 2 = minet_max, kind 3 = minet_mean, dims = D, w1, w2, w3
# Payload: tensors in named_tensors() order, row-major little-endian float64.

CHECKPOINT_MAGIC = b"MILCKPT1"
_KIND_TAGS = {"multi_attention": 1, "minet_max": 2, "minet_mean": 3}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


def save_checkpoint(path, params: ModelParams) -> None:
    if isinstance(params, MultiAttentionParams):
        dims = (params.input_dim, params.hidden, params.attention_width)
    else:
        dims = (params.input_dim, *params.widths)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", _KIND_TAGS[params.kind]))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for _, tensor in params.named_tensors():
            fh.write(np.ascontiguousarray(tensor.values, dtype="<f8").tobytes())


def _empty_params(kind: str, dims: tuple[int, ...]) -> ModelParams:
    """Parameter containers with zero values, matching the header dims."""

    def lin(n_in, n_out):
        return LinearParams(Tensor(np.zeros((n_in, n_out))), Tensor(np.zeros((1, n_out))))

    def att(m, l):
        return AttentionParams(Tensor(np.zeros((l, m))), Tensor(np.zeros((l, 1))))

    if kind == "multi_attention":
        d, h, l = dims
        return MultiAttentionParams(
            fc1=lin(d, h), fc2=lin(h, h), fc3=lin(h, h),
            att1=att(h, l), att2=att(h, l), att3=att(h, l),
            head=lin(h, 2),
        )
    d, w1, w2, w3 = dims
    return MiNetParams(
        fcs=(lin(d, w1), lin(w1, w2), lin(w2, w3)),
        head=lin(w3, 2),
        pool=kind.removeprefix("minet_"),
    )


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: bad checkpoint magic (expected {CHECKPOINT_MAGIC!r})")
    offset = len(CHECKPOINT_MAGIC)

    def take(fmt):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise DataError(f"{path}: truncated checkpoint header")
        vals = struct.unpack_from(fmt, blob, offset)
        offset += size
        return vals

    (tag,) = take("<I")
    if tag not in _TAG_KINDS:
        raise DataError(f"{path}: unknown model kind tag {tag}")
    kind = _TAG_KINDS[tag]
    n_dims = 3 if kind == "multi_attention" else 4
    dims = take(f"<{n_dims}I")
    if any(d < 1 for d in dims):
        raise DataError(f"{path}: non-positive dimension in header {dims}")
    params = _empty_params(kind, dims)
    expected = sum(t.values.size for _, t in params.named_tensors()) * 8
    payload = blob[offset:]
    if len(payload) != expected:
        raise DataError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}"
        )
    for _, tensor in params.named_tensors():
        n = tensor.values.size * 8
        flat = np.frombuffer(payload[:n], dtype="<f8")
        tensor.values[...] = flat.reshape(tensor.values.shape)
        payload = payload[n:]
    return params
