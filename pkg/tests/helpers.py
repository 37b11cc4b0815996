"""Shared synthetic problem generators for the test suite."""

import numpy as np

from locicp.correspondence import CorrespondenceSet
from locicp.geometry import exp_rotvec


def unit_rows(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def tangent_offsets(rng, n, scale=0.1):
    """Random offsets orthogonal to each normal (zero point-to-plane residual)."""
    off = rng.normal(size=(len(n), 3)) * scale
    return off - np.einsum("ij,ij->i", off, n)[:, None] * n


def pairs(p, q, n, frame="L"):
    idx = np.arange(len(p))
    return CorrespondenceSet(p, q, n, idx, idx, np.linalg.norm(p - q, axis=1), frame)


def random_pairs(rng, count=200, spread=5.0, noise=0.0, frame="L"):
    p = rng.normal(size=(count, 3)) * spread
    n = unit_rows(rng, count)
    q = p + tangent_offsets(rng, n) + noise * rng.normal(size=(count, 1)) * n
    return pairs(p, q, n, frame)


def point_to_plane_cost(x, p, q, n):
    """Nonlinear cost sum((n . (exp(r) p + t - q))^2) at update ``x = [r; t]``."""
    R = exp_rotvec(x[:3])
    res = np.einsum("ij,ij->i", n, p @ R.T + x[3:] - q)
    return float(res @ res)


def fd_hessian(f, h=1e-4):
    H = np.zeros((6, 6))
    e = np.eye(6) * h
    for i in range(6):
        for j in range(6):
            H[i, j] = (f(e[i] + e[j]) - f(e[i] - e[j]) - f(-e[i] + e[j]) + f(-e[i] - e[j])) / (4 * h * h)
    return H
