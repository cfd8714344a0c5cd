"""Numpy versions of the pairwise interaction sums in ``_kernels.pyx``."""

import numpy as np


def influence(s, kind, param):
    if kind == 0:
        return np.full_like(s, param)
    if kind == 1:
        return (1.0 + s * s) ** (-param)
    return (s <= param).astype(float)


def alignment_rhs(x, kind, param):
    """``out_i = sum_j a(|x_j - x_i|) (x_j - x_i)`` (no ``1/N`` factor)."""
    x = np.asarray(x, dtype=float)
    d = x[None, :] - x[:, None]
    return (influence(np.abs(d), kind, param) * d).sum(axis=1)


def weighted_alignment_rhs(x, W, kind, param):
    """``out_i = sum_j W_ij a(|x_j - x_i|) (x_j - x_i)`` (no quadrature weight)."""
    x = np.asarray(x, dtype=float)
    d = x[None, :] - x[:, None]
    return (np.asarray(W) * influence(np.abs(d), kind, param) * d).sum(axis=1)


def alignment_rhs_nd(X, kind, param):
    """Vector opinions: ``X`` has shape (n, d) and distances are Euclidean."""
    D = X[None, :, :] - X[:, None, :]
    s = np.sqrt((D * D).sum(axis=2))
    return (influence(s, kind, param)[:, :, None] * D).sum(axis=1)
