"""Independent oracles shared by several test modules."""

import numpy as np


def fd_gradient(f, x, rel_step=1e-6):
    """Central differences with step ``rel_step * (1 + |x_j|)``."""
    g = np.empty_like(x)
    for j in range(x.size):
        h = rel_step * (1.0 + abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_relative_error(objectives, i, x):
    g = objectives.grad(i, x)
    fd = fd_gradient(lambda z: objectives.value(i, z), x)
    return float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-300))


def centralized_gd(A_sum, b_sum, alpha, x0, iters):
    """Reference gradient descent on 1/2 x^T S x + c^T x, one iterate per row."""
    xs = [x0]
    x = x0
    for _ in range(iters):
        x = x - alpha * (A_sum @ x + b_sum)
        xs.append(x)
    return np.array(xs)
