"""Finite-difference verification of the analytic gradients.

The numeric side perturbs parameter values and re-runs the forward pass only
(central differences), so it is independent of every backward rule it checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Graph
from .models import MODEL_KINDS, Bag, forward, init_params
from .rng import Xoshiro256StarStar
from .training import cross_entropy

DEFAULT_TOLERANCE = 1e-4
FD_STEP = 1e-5


def finite_difference_grad(loss_fn, values: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of `loss_fn()` w.r.t. every entry of `values`.

    `values` is mutated in place during probing and restored afterwards.
    """
    grad = np.zeros_like(values)
    flat = values.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = loss_fn()
        flat[i] = orig - h
        f_minus = loss_fn()
        flat[i] = orig
        out[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(1e-8, |a| + |n|) over all entries."""
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float((np.abs(analytic - numeric) / denom).max())


@dataclass
class TensorCheck:
    tensor: str
    max_rel_err: float


@dataclass
class ModelCheck:
    model: str
    checks: list[TensorCheck]

    @property
    def max_rel_err(self) -> float:
        return max(c.max_rel_err for c in self.checks)


@dataclass
class GradCheckReport:
    tolerance: float
    models: list[ModelCheck]

    @property
    def max_rel_err(self) -> float:
        return max(m.max_rel_err for m in self.models)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def _random_bag(rng, bag_size: int, dim: int) -> Bag:
    vals = [rng.uniform(-2.0, 2.0) for _ in range(bag_size * dim)]
    return Bag(
        id="gradcheck",
        instances=np.array(vals).reshape(bag_size, dim),
        label=1,
    )


def check_model(
    kind: str,
    input_dim: int = 8,
    hidden: int = 6,
    attention_width: int = 5,
    minet_widths: tuple[int, int, int] = (6, 5, 4),
    bag_size: int = 4,
    seed: int = 20240,
    tolerance: float = DEFAULT_TOLERANCE,
    perturb: bool = False,
) -> ModelCheck:
    """Compare backward() against finite differences on one tiny random model.

    `perturb` deliberately corrupts the first analytic gradient before the
    comparison (negative control: the check must then fail).
    """
    rng = Xoshiro256StarStar(seed).substream(f"gradcheck/{kind}")
    bag = _random_bag(rng, bag_size, input_dim)
    params = init_params(
        kind,
        input_dim,
        seed=rng.next_u64(),
        hidden=hidden,
        attention_width=attention_width,
        minet_widths=minet_widths,
    )
    named = params.named_tensors()
    # Fresh init has all-zero biases, which parks dead-row pre-activations
    # exactly on the ReLU kink where central differences are invalid.
    # Checking at a jittered (still arbitrary) parameter point avoids that.
    for name, tensor in named:
        if name.endswith(".bias"):
            flat = tensor.values.reshape(-1)
            for i in range(flat.size):
                flat[i] = rng.uniform(-0.2, 0.2)

    def loss_value() -> float:
        g = Graph()
        prob, _ = forward(g, bag, params)
        return cross_entropy(g, prob, bag.label).item()

    g = Graph()
    prob, _ = forward(g, bag, params)
    loss = cross_entropy(g, prob, bag.label)
    for _, t in named:
        t.zero_grad()
    g.backward(loss)
    analytic = [t.grad.copy() for _, t in named]
    if perturb:
        # negative control: a visibly wrong "backward rule" on the first tensor
        analytic[0] += 0.01 * (np.abs(analytic[0]) + 1.0)

    checks = []
    for (name, tensor), a in zip(named, analytic):
        numeric = finite_difference_grad(loss_value, tensor.values)
        checks.append(TensorCheck(tensor=name, max_rel_err=max_relative_error(a, numeric)))
    return ModelCheck(model=kind, checks=checks)


def run_gradcheck(
    kinds=MODEL_KINDS,
    tolerance: float = DEFAULT_TOLERANCE,
    seed: int = 20240,
    perturb: bool = False,
    **dims,
) -> GradCheckReport:
    models = [check_model(kind, seed=seed, perturb=perturb, **dims) for kind in kinds]
    return GradCheckReport(tolerance=tolerance, models=models)
