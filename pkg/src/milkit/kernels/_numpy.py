"""numpy implementations of the numeric kernels.

All arrays are C-contiguous float64 matrices. Backward kernels *accumulate*
into their gradient arguments (``dx += ...``) to match the tape's additive
fan-out semantics; callers zero gradients between backward passes.
"""

import numpy as np

BACKEND_NAME = "python"


def matmul(a, b):
    return a @ b


def matmul_bwd(a, b, dc, da, db):
    da += dc @ b.T
    db += a.T @ dc


def tanh_fwd(x):
    return np.tanh(x)


def tanh_bwd(y, dy, dx):
    dx += (1.0 - y * y) * dy


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(y, dy, dx):
    # relu(x) > 0 iff x > 0, so the saved output determines the mask
    dx += np.where(y > 0.0, dy, 0.0)


def softmax_fwd(x):
    """Softmax over all entries of a vector-shaped matrix, max-subtracted."""
    e = np.exp(x - x.max())
    return e / e.sum()


def softmax_bwd(y, dy, dx):
    dx += y * (dy - np.sum(y * dy))


def add_bias_fwd(x, b):
    return x + b


def add_bias_bwd(dy, dx, db):
    dx += dy
    db += dy.sum(axis=0, keepdims=True)


def reduce_sum_fwd(x):
    return x.sum(axis=0, keepdims=True)


def reduce_sum_bwd(dy, dx):
    dx += dy


def reduce_mean_fwd(x):
    return x.mean(axis=0, keepdims=True)


def reduce_mean_bwd(dy, dx):
    dx += dy / dx.shape[0]


def reduce_max_fwd(x):
    """Columnwise max; returns (values [1xH], first maximal row per column)."""
    rows = x.argmax(axis=0).astype(np.int64)
    out = x[rows, np.arange(x.shape[1])].reshape(1, -1)
    return out, rows


def reduce_max_bwd(dy, rows, dx):
    dx[rows, np.arange(dx.shape[1])] += dy[0]


def adam_step(theta, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """One fused Adam update, in place. bc1/bc2 are the bias corrections 1-beta^t."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    theta -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
