"""Independent reference computations used only by the tests."""

from __future__ import annotations

import numpy as np
from scipy.linalg import eig


def cheb(n: int):
    """Chebyshev differentiation matrix and points on [-1, 1] (Trefethen)."""
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2
    c *= (-1) ** np.arange(n + 1)
    X = np.tile(x, (n + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1 / c) / (dX + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return D, x


def neumann_weighted_eigs(a, x0: float, x1: float, n: int = 96) -> np.ndarray:
    """Finite eigenvalues of -φ'' = μ a φ, φ'(x0) = φ'(x1) = 0, by spectral collocation."""
    D, t = cheb(n)
    s = 2.0 / (x1 - x0)
    x = x0 + (t + 1) / s
    D1 = s * D
    A = -D1 @ D1
    B = np.diag(a(x))
    A[0], A[-1] = D1[0], D1[-1]
    B[0] = B[-1] = 0.0
    vals = eig(A, B, right=False)
    vals = vals[np.isfinite(vals)]
    return np.sort(vals[np.abs(vals.imag) < 1e-8].real)


def principal_mu(a, x0: float, x1: float, n: int = 96) -> float:
    vals = neumann_weighted_eigs(a, x0, x1, n)
    return float(vals[vals > 1e-8].min())
