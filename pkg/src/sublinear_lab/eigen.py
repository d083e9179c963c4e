"""Principal eigenpairs: indefinite weight, linearization, and the mixed collar problem.

Every problem is reduced to the symmetric tridiagonal matrix
A = M^{-1/2} S M^{-1/2} (the Neumann -Δ_h in the measure-weighted basis).
Principal eigenvalues of weighted pencils are located as roots of
μ ↦ λ_min(A - μ diag(w)), which is concave in μ.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .errors import HypothesisError, SolverError
from .grid import Grid, dirichlet_form, integrate
from .weights import Weight, check_hypotheses

log = logging.getLogger(__name__)

STABILITY_TOL = 1e-9


@dataclass
class EigenPair:
    eigenvalue: float
    eigenfunction: np.ndarray
    residual_norm: float
    normalization: float

    def to_json(self) -> dict:
        return {
            "eigenvalue": self.eigenvalue,
            "residualNorm": self.residual_norm,
            "normalization": self.normalization,
        }


@dataclass
class StabilityResult:
    gamma1: float
    eigenfunction: np.ndarray
    classification: str

    def to_json(self) -> dict:
        return {"gamma1": self.gamma1, "classification": self.classification}


def classify_stability(gamma1: float, tol: float = STABILITY_TOL) -> str:
    if gamma1 > tol:
        return "asymptoticallyStable"
    if gamma1 >= -tol:
        return "weaklyStable"
    return "unstable"


def _symmetric_bands(diag, off, measures):
    s = 1.0 / np.sqrt(measures)
    return diag * s * s, off * s[:-1] * s[1:]


def _relative_residual(d, e, wdiag, mu, y) -> float:
    """‖(A - μW) y‖∞ / (‖A‖∞ ‖y‖∞) in the symmetric basis."""
    r = (d - mu * wdiag) * y
    r[:-1] += e * y[1:]
    r[1:] += e * y[:-1]
    norm = np.abs(d).copy()
    norm[:-1] += np.abs(e)
    norm[1:] += np.abs(e)
    return float(np.abs(r).max() / (norm.max() * np.abs(y).max()))


def _lowest(d, e, vectors: bool = False):
    if vectors:
        vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, 0), check_finite=False)
        return vals[0], vecs[:, 0]
    return eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, 0), check_finite=False)[0]


def _first_root(d, e, wdiag, guess: float, g0_zero: bool) -> float:
    """First positive root of g(μ) = λ_min(d - μ w, e).

    With ``g0_zero`` the root at μ = 0 (constants) is skipped; g is concave so
    any point with g > 0 lies left of the wanted root.
    """
    scale = max(np.abs(d).max(), 1.0)
    g = lambda mu: _lowest(d - mu * wdiag, e)
    lo, hi = 0.0, guess
    for _ in range(200):
        v = g(hi)
        if v < 0:
            break
        lo, hi = hi, 2 * hi
    else:
        raise SolverError("no sign change of λ_min found while expanding the eigenvalue bracket")
    if g0_zero and lo == 0.0:
        # shrink until g is clearly positive so brentq does not return μ = 0
        lo = hi
        for _ in range(200):
            lo /= 2
            if g(lo) > 1e-13 * scale:
                break
        else:
            raise SolverError("could not separate the principal eigenvalue from μ = 0")
    return brentq(g, lo, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps, maxiter=500)


def _signed_positive(v: np.ndarray, what: str, mask=None) -> np.ndarray:
    v = v if v.sum() >= 0 else -v
    check = v if mask is None else v[mask]
    if check.min() <= 0:
        raise SolverError(f"{what}: eigenfunction not positive (min {check.min():.3e}); eigenvalue is not principal")
    return v


def principal_indefinite_eigen(grid: Grid, w: Weight) -> EigenPair:
    """(μ₁, φ₁) of -Δφ = μ a φ with Neumann conditions, ∫φ₁² = 1, φ₁ > 0."""
    a = grid.check(w.values, "weight")
    rep = check_hypotheses(w)
    if not rep.H0:
        raise HypothesisError(f"principal eigenvalue needs a sign-changing weight with ∫a < 0 (∫a = {rep.integral:.6g})")
    d, e = _symmetric_bands(*grid.stiffness_bands(), grid.measures)
    slope = -rep.integral / grid.volume
    guess = 1.0 / max(np.abs(a).max(), slope)
    mu = _first_root(d, e, a, guess, g0_zero=True)
    _, y = _lowest(d - mu * a, e, vectors=True)
    phi = _signed_positive(y / np.sqrt(grid.measures), "principal_indefinite_eigen")
    norm = integrate(grid, phi**2)
    phi = phi / np.sqrt(norm)
    res = _relative_residual(d, e, a, mu, y)
    log.debug("μ₁ = %.15g, relative residual %.2e", mu, res)
    return EigenPair(float(mu), phi, res, integrate(grid, phi**2))


def rayleigh_quotient(grid: Grid, a, phi) -> float:
    """∫|∇φ|² / ∫aφ²."""
    return dirichlet_form(grid, phi) / integrate(grid, a * phi**2)


def linearized_eigen(grid: Grid, w: Weight, q: float, u) -> StabilityResult:
    """γ₁ of -Δφ - q a u^{q-1} φ = γ φ with Neumann conditions."""
    u = grid.check(u, "u")
    if q <= 0:
        raise ValueError(f"linearization needs q > 0, got {q}")
    bad = np.flatnonzero(u <= 0)
    if bad.size:
        i = int(bad[0])
        raise HypothesisError(f"u must be positive for the linearization; u[{i}] = {u[i]:.3e} at x = {grid.coordinates[i]:.6g}")
    d, e = _symmetric_bands(*grid.stiffness_bands(), grid.measures)
    pot = q * w.values * u ** (q - 1)
    gamma, y = _lowest(d - pot, e, vectors=True)
    phi = y / np.sqrt(grid.measures)
    phi = phi if phi.sum() >= 0 else -phi
    return StabilityResult(float(gamma), phi, classify_stability(gamma))


def collar_indices(grid: Grid, collar) -> tuple[np.ndarray, int]:
    """Nodes of the collar (lo, hi) and the index of its Dirichlet edge.

    One end of the collar must be a Neumann boundary node of the grid; the
    other end, snapped to the nearest node, carries the Dirichlet condition.
    """
    lo, hi = map(float, collar)
    x = grid.coordinates
    i_lo = int(np.argmin(np.abs(x - lo)))
    i_hi = int(np.argmin(np.abs(x - hi)))
    if not i_lo < i_hi:
        raise ValueError(f"collar {collar} is empty on this grid")
    bnd = set(int(b) for b in grid.boundary_nodes)
    if i_hi in bnd and i_hi == grid.n - 1:
        return np.arange(i_lo + 1, i_hi + 1), i_lo
    if i_lo in bnd and i_lo == 0:
        return np.arange(i_lo, i_hi), i_hi
    raise ValueError(f"collar {collar} must touch the outer boundary of the domain")


def mixed_eigen(grid: Grid, wplus, collar) -> EigenPair:
    """(σ₁, ψ₁) of -Δψ = σ a⁺ ψ on the collar, ψ = 0 on its inner edge.

    ``wplus`` is a Weight or array; its positive part is used. The returned
    eigenfunction lives on the full grid and vanishes off the collar.
    """
    vals = wplus.values if isinstance(wplus, Weight) else wplus
    ap = np.maximum(grid.check(vals, "weight"), 0.0)
    idx, edge = collar_indices(grid, collar)
    if not (ap[idx] > 0).any():
        raise HypothesisError("a⁺ vanishes identically on the collar")
    diag, off = grid.stiffness_bands()
    m = grid.measures[idx]
    # restricting S to the collar imposes ψ = 0 at the excluded edge node
    d, e = _symmetric_bands(diag[idx], off[idx[:-1]], m)
    sigma = _first_root(d, e, ap[idx], 1.0 / ap[idx].max(), g0_zero=False)
    _, y = _lowest(d - sigma * ap[idx], e, vectors=True)
    psi_c = _signed_positive(y / np.sqrt(m), "mixed_eigen")
    psi_c /= np.sqrt(np.dot(psi_c**2, m))
    psi = np.zeros(grid.n)
    psi[idx] = psi_c
    res = _relative_residual(d, e, ap[idx], sigma, y)
    return EigenPair(float(sigma), psi, res, float(np.dot(psi_c**2, m)))
