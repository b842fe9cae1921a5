"""Loss, Adam optimizer, and the per-bag training loop.

Batch size is one bag (bags have variable K, so each optimizer step consumes
exactly one bag's graph). Bag order is reshuffled every epoch from the run
PRNG's "shuffle" substream; with a fixed seed and dataset the whole loop is
bit-for-bit reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .autodiff import Graph, Tensor
from .errors import (
    DataError,
    DimensionError,
    NumericError,
    ValidationError,
)
from .models import ModelParams, forward, init_params
from .rng import Xoshiro256StarStar

LOG_FLOOR = 1e-12
PROB_SUM_TOL = 1e-6


def cross_entropy(g: Graph, prob: Tensor, target: int) -> Tensor:
    """Negative log-likelihood of the target class, as a 1x1 graph node.

    `prob` must be a vector-shaped distribution (sums to 1 within 1e-6).
    The probability is floored at 1e-12 before the log, so the loss and its
    gradient stay finite even for a confidently wrong model.
    """
    if not prob.is_vector():
        raise DimensionError(f"cross_entropy needs a probability vector, got {prob.shape}")
    flat = prob.values.reshape(-1)
    n_classes = flat.shape[0]
    if not 0 <= int(target) < n_classes:
        raise ValidationError(
            f"target {target} out of range for {n_classes} classes"
        )
    if abs(flat.sum() - 1.0) > PROB_SUM_TOL:
        raise ValidationError(f"probabilities sum to {flat.sum()!r}, not 1")
    target = int(target)
    p_t = max(float(flat[target]), LOG_FLOOR)
    rows, cols = prob.shape
    r, c = (0, target) if rows == 1 else (target, 0)

    def bwd(out):
        prob.grad[r, c] += -out.grad[0, 0] / p_t

    return g.custom("cross_entropy", (prob,), [[-math.log(p_t)]], bwd)


@dataclass
class AdamState:
    """Per-parameter moment buffers plus the shared step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(
    tensors: list[Tensor],
    lr: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    if lr < 0:
        raise ValidationError(f"learning rate must be >= 0, got {lr}")
    return AdamState(
        m=[np.zeros_like(t.values) for t in tensors],
        v=[np.zeros_like(t.values) for t in tensors],
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(tensors: list[Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update over every parameter tensor, in place."""
    if len(tensors) != len(state.m):
        raise DimensionError(
            f"Adam state tracks {len(state.m)} tensors, got {len(tensors)}"
        )
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for tensor, m, v in zip(tensors, state.m, state.v):
        if tensor.values.shape != m.shape:
            raise DimensionError(
                f"parameter shape {tensor.values.shape} does not match Adam "
                f"state shape {m.shape}"
            )
        kernels.adam_step(
            tensor.values, tensor.grad, m, v,
            state.lr, state.beta1, state.beta2, state.eps, bc1, bc2,
        )


@dataclass
class TrainConfig:
    model: str = "multi_attention"
    learning_rate: float = 1e-4
    epochs: int = 30
    seed: int = 0
    hidden: int = 256
    attention_width: int = 128
    minet_widths: tuple[int, int, int] = (256, 128, 64)
    shuffle: bool = True
    dropout: float = 0.0

    def validate(self) -> None:
        from .models import MODEL_KINDS

        if self.model not in MODEL_KINDS:
            raise ValidationError(f"unknown model kind {self.model!r}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass
class TrainHistory:
    """Post-epoch training-set mean loss and accuracy, one row per epoch.

    Rows are measured with the parameters frozen at the end of the epoch, so
    the final row matches a later evaluation of the saved checkpoint on the
    same bags exactly.
    """

    mean_loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.mean_loss)

    def rows(self):
        for epoch, (loss, acc) in enumerate(zip(self.mean_loss, self.accuracy), start=1):
            yield epoch, loss, acc

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("epoch,mean_loss,train_accuracy\n")
            for epoch, loss, acc in self.rows():
                fh.write(f"{epoch},{loss!r},{acc!r}\n")


def score_bags(bags, params: ModelParams) -> np.ndarray:
    """Probability of the positive class for each bag (forward only)."""
    return np.array([forward(Graph(), bag, params)[0].values[0, 1] for bag in bags])


def evaluate_bags(bags, params: ModelParams) -> tuple[np.ndarray, float, float]:
    """(positive-class probs, mean cross-entropy, accuracy at threshold 0.5)."""
    probs = score_bags(bags, params)
    if not np.isfinite(probs).all():
        raise NumericError("model produced non-finite probabilities")
    labels = np.array([bag.label for bag in bags])
    p_label = np.where(labels == 1, probs, 1.0 - probs)
    mean_loss = float(np.mean(-np.log(np.maximum(p_label, LOG_FLOOR))))
    accuracy = float(np.mean((probs >= 0.5).astype(int) == labels))
    return probs, mean_loss, accuracy


def _check_dims(bags) -> int:
    dim = bags[0].dim
    for bag in bags:
        if bag.dim != dim:
            raise DataError(
                f"feature width drifts across bags: {dim} vs {bag.dim} in {bag.id!r}"
            )
    return dim


def train(dataset, cfg: TrainConfig, params: ModelParams | None = None):
    """Train on every bag of `dataset` -> (params, TrainHistory).

    `dataset` is anything with a ``bags`` attribute (or a plain bag list).
    Pass `params` to continue training an existing model; otherwise fresh
    parameters are initialized from cfg.seed.
    """
    cfg.validate()
    bags = list(getattr(dataset, "bags", dataset))
    if not bags:
        raise DataError("training needs a nonempty dataset")
    dim = _check_dims(bags)

    if params is None:
        params = init_params(
            cfg.model,
            dim,
            seed=cfg.seed,
            hidden=cfg.hidden,
            attention_width=cfg.attention_width,
            minet_widths=cfg.minet_widths,
        )
    elif params.input_dim != dim:
        raise DimensionError(
            f"resumed params expect width {params.input_dim}, dataset has {dim}"
        )

    tensors = [t for _, t in params.named_tensors()]
    state = init_adam(tensors, lr=cfg.learning_rate)
    run_rng = Xoshiro256StarStar(cfg.seed)
    shuffle_rng = run_rng.substream("shuffle")
    dropout_rng = run_rng.substream("dropout") if cfg.dropout > 0 else None

    history = TrainHistory()
    order = list(range(len(bags)))
    for _ in range(cfg.epochs):
        if cfg.shuffle:
            shuffle_rng.shuffle(order)
        for i in order:
            bag = bags[i]
            g = Graph()
            prob, _ = forward(g, bag, params, dropout=cfg.dropout, rng=dropout_rng)
            loss = cross_entropy(g, prob, bag.label)
            if not math.isfinite(loss.item()):
                raise NumericError(f"non-finite loss on bag {bag.id!r}")
            for t in tensors:
                t.zero_grad()
            g.backward(loss)
            adam_step(tensors, state)
        _, mean_loss, accuracy = evaluate_bags(bags, params)
        history.mean_loss.append(mean_loss)
        history.accuracy.append(accuracy)
    return params, history
