"""Benchmark the compiled kernel core against the numpy fallback.

Times each kernel on shapes representative of the digit-bags training loop
(bag of 10 instances, 784 features, hidden width 256, attention width 128)
plus one full train step of the multi-attention model per backend.

Run:  python benchmarks/bench_kernels.py
"""

import time
import timeit

import numpy as np

from milkit import kernels
from milkit.autodiff import Graph
from milkit.models import Bag, forward, init_params
from milkit.training import TrainConfig, adam_step, cross_entropy, init_adam

K, D, H, L = 10, 784, 256, 128


def bench(fn, min_time=0.2):
    """Best-of sampling: calls/sec measured over ~min_time."""
    n, elapsed = 1, 0.0
    while True:
        elapsed = timeit.timeit(fn, number=n)
        if elapsed >= min_time:
            return elapsed / n
        n = max(n + 1, int(n * min_time / max(elapsed, 1e-9) * 1.2))


def kernel_cases(rng):
    x_kd = rng.standard_normal((K, D))
    w_dh = rng.standard_normal((D, H))
    x_kh = rng.standard_normal((K, H))
    w_hh = rng.standard_normal((H, H))
    dy_kh = rng.standard_normal((K, H))
    scores = rng.standard_normal((K, 1))
    theta = rng.standard_normal((D, H))
    grad = rng.standard_normal((D, H))
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    y_kh = np.tanh(x_kh)
    cases = {
        f"matmul {K}x{D} @ {D}x{H}": lambda k: k.matmul(x_kd, w_dh),
        f"matmul {K}x{H} @ {H}x{H}": lambda k: k.matmul(x_kh, w_hh),
        f"matmul_bwd {K}x{H} @ {H}x{H}": lambda k: k.matmul_bwd(
            x_kh, w_hh, dy_kh, np.zeros((K, H)), np.zeros((H, H))
        ),
        f"tanh_fwd {K}x{H}": lambda k: k.tanh_fwd(x_kh),
        f"tanh_bwd {K}x{H}": lambda k: k.tanh_bwd(y_kh, dy_kh, np.zeros((K, H))),
        f"relu_fwd {K}x{H}": lambda k: k.relu_fwd(x_kh),
        f"softmax K={K}": lambda k: k.softmax_fwd(scores),
        f"reduce_max {K}x{H}": lambda k: k.reduce_max_fwd(x_kh),
        f"adam_step {D}x{H}": lambda k: k.adam_step(
            theta, grad, m, v, 1e-4, 0.9, 0.999, 1e-8, 0.1, 0.001
        ),
    }
    return cases


def train_step_case(backend, n_bags=30, seed=99):
    kernels.use_backend(backend)
    rng = np.random.default_rng(seed)
    bags = [
        Bag(f"b{i}", rng.uniform(0, 1, (K, D)), int(i % 2)) for i in range(n_bags)
    ]
    params = init_params("multi_attention", D, seed=seed, hidden=H, attention_width=L)
    tensors = [t for _, t in params.named_tensors()]
    state = init_adam(tensors, lr=TrainConfig().learning_rate)

    def step():
        for bag in bags:
            g = Graph()
            prob, _ = forward(g, bag, params)
            loss = cross_entropy(g, prob, bag.label)
            for t in tensors:
                t.zero_grad()
            g.backward(loss)
            adam_step(tensors, state)

    started = time.perf_counter()
    step()
    return (time.perf_counter() - started) / n_bags


def main():
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled core not built; only the python backend is available")
    rng = np.random.default_rng(7)
    cases = kernel_cases(rng)

    print(f"{'kernel':34s}" + "".join(f"{b:>14s}" for b in backends) + f"{'speedup':>10s}")
    for name, fn in cases.items():
        times = {}
        for b in backends:
            mod = kernels.get_backend_module(b)
            times[b] = bench(lambda: fn(mod))
        row = f"{name:34s}" + "".join(f"{times[b] * 1e6:12.1f}us" for b in backends)
        if len(backends) == 2:
            row += f"{times['python'] / times['cython']:9.2f}x"
        print(row)

    print()
    step_times = {b: train_step_case(b) for b in backends}
    row = f"{'full train step (per bag)':34s}" + "".join(
        f"{step_times[b] * 1e3:12.2f}ms" for b in backends
    )
    if len(backends) == 2:
        row += f"{step_times['python'] / step_times['cython']:9.2f}x"
    print(row)


if __name__ == "__main__":
    main()
