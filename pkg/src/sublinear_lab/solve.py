"""Solvers for -Δu = a u^q (Neumann) and its auxiliary problems.

Residual tolerances are relative: a field u passes when
max|-Δ_h u - a u^q| <= tol * max|a u^q|.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError

from .errors import HypothesisError, SolverError, TrivialSolutionError
from .grid import (
    Grid,
    dirichlet_form,
    integrate,
    power,
    residual,
    stiffness_apply,
    tridiag_solve,
)
from .weights import Weight

log = logging.getLogger(__name__)

OVERFLOW_GUARD = 1e150
NEWTON_FLOOR = 1e-30
NEWTON_STALL = 50  # steps allowed without halving the residual


@dataclass
class SolveParams:
    max_iterations: int = 20000
    tolerance: float = 1e-10
    positivity_floor: float | None = None
    damping: str = "halving"
    newton_polish: bool = True

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.positivity_floor is not None and self.positivity_floor < 0:
            raise ValueError("positivity_floor must be nonnegative")


@dataclass
class PositivityClass:
    cls: str
    min_value: float
    boundary_min: float
    zero_set: list[tuple[float, float]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "class": self.cls,
            "minValue": self.min_value,
            "boundaryMin": self.boundary_min,
            "zeroSet": [list(z) for z in self.zero_set],
        }


@dataclass
class SubSuperPair:
    sub: np.ndarray
    sup: np.ndarray
    ordered_check: bool = True

    def __post_init__(self):
        self.sub = np.asarray(self.sub, dtype=float)
        self.sup = np.asarray(self.sup, dtype=float)
        if self.sub.shape != self.sup.shape:
            raise ValueError("sub and super live on different grids")
        if self.ordered_check and (self.sub > self.sup).any():
            i = int(np.argmax(self.sub - self.sup))
            raise ValueError(f"pair is not ordered: sub - super = {self.sub[i] - self.sup[i]:.3e} at node {i}")


def residual_scale(a, u, q: float) -> float:
    return float(max(np.abs(a * power(u, q)).max(), 1e-300))


def roundoff_level(grid: Grid, a, q: float, u) -> float:
    """Relative residual attainable in double precision for this u (grows like h^-2)."""
    diag, _ = grid.stiffness_bands()
    return float(16 * np.finfo(float).eps * np.abs(diag / grid.measures * u).max() / residual_scale(a, u, q))


def converged(grid: Grid, a, q: float, u, res: float, tol: float) -> bool:
    return res <= max(tol, roundoff_level(grid, a, q, u))


def relative_residual(grid: Grid, a, q: float, u) -> float:
    return float(np.abs(residual(grid, a, q, u)).max() / residual_scale(a, u, q))


def energy(grid: Grid, a, q: float, u) -> float:
    """E(u) = ½∫|∇u|² - ∫a (u⁺)^{q+1}/(q+1)."""
    return 0.5 * dirichlet_form(grid, u) - integrate(grid, a * power(u, q + 1)) / (q + 1)


def energy_identity_gap(grid: Grid, a, q: float, u) -> float:
    """Relative gap between ∫|∇u|² and ∫a u^{q+1}."""
    lhs = dirichlet_form(grid, u)
    rhs = integrate(grid, a * power(u, q + 1))
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


# -- linear problems -----------------------------------------------------------


def solve_linear_neumann(grid: Grid, rhs) -> np.ndarray:
    """Zero-mean solution of -Δ_h w = rhs under Neumann conditions."""
    rhs = grid.check(rhs, "rhs")
    total = integrate(grid, rhs)
    if abs(total) > 1e-8 * max(np.abs(rhs).max(), 1e-300) * grid.volume:
        raise HypothesisError(f"Neumann problem is incompatible: ∫rhs = {total:.6g} ≠ 0")
    f = grid.measures * (rhs - total / grid.volume)
    diag, off = grid.stiffness_bands()
    w = np.zeros(grid.n)
    # pin the last node; its equation follows from compatibility
    w[:-1] = tridiag_solve(diag[:-1], off[:-1], f[:-1])
    return w - integrate(grid, w) / grid.volume


def large_supersolution(grid: Grid, w: Weight, q: float, floor: float, tol: float = 1e-8) -> np.ndarray:
    """A supersolution ū = t + t^q ψ with min ū >= floor.

    ψ solves -Δψ = a - ā with ā = ∫a/|Ω| < 0, so
    -Δū - a ū^q = t^q (a - ā - a (1 + t^{q-1}ψ)^q) → -ā t^q > 0 as t grows.
    """
    a = grid.check(w.values, "weight")
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0,1), got {q}")
    abar = integrate(grid, a) / grid.volume
    if not abar < 0:
        raise HypothesisError(f"supersolution construction needs ∫a < 0 (∫a = {abar * grid.volume:.6g})")
    psi = solve_linear_neumann(grid, a - abar)
    t = max(floor, 1.0)
    while t < OVERFLOW_GUARD:
        u = t + t**q * psi
        if u.min() >= floor and residual(grid, a, q, u).min() >= -tol:
            return u
        t *= 2.0
    raise SolverError("large_supersolution exceeded the overflow guard")


def branch_extension_subsolution(u0, q0: float, q: float) -> np.ndarray:
    """w = γ^{-1/(1-q)} u0^γ with γ = (1-q0)/(1-q), a subsolution at exponent q."""
    u0 = np.asarray(u0, dtype=float)
    if not q0 <= q < 1:
        raise ValueError(f"need q0 <= q < 1, got q0={q0}, q={q}")
    if u0.min() <= 0:
        raise HypothesisError("branch extension needs a strictly positive solution u0")
    gamma = (1 - q0) / (1 - q)
    return gamma ** (-1 / (1 - q)) * u0**gamma


# -- nonlinear solvers -----------------------------------------------------------


def newton_refine(grid: Grid, w: Weight, q: float, guess, params: SolveParams | None = None) -> np.ndarray:
    """Damped Newton for -Δ_h u = a u^q with iterates clamped at the positivity floor."""
    params = params or SolveParams()
    a = grid.check(w.values, "weight")
    u = grid.check(guess, "guess").copy()
    if u.max() <= 0:
        raise HypothesisError("Newton guess is identically zero")
    floor = params.positivity_floor if params.positivity_floor is not None else NEWTON_FLOOR * u.max()
    if u.min() < floor:
        raise HypothesisError(f"Newton guess {u.min():.3e} lies below the positivity floor {floor:.3e}")
    diag, off = grid.stiffness_bands()
    m = grid.measures

    def F(v):
        return stiffness_apply(grid, v) - m * a * power(v, q)

    def norm(v, Fv):
        return np.abs(Fv / m).max() / residual_scale(a, v, q)

    Fu = F(u)
    res = norm(u, Fu)
    history = [res]
    for it in range(params.max_iterations):
        if converged(grid, a, q, u, res, params.tolerance):
            return u
        jd = diag - q * m * a * np.maximum(u, floor) ** (q - 1)
        try:
            du = tridiag_solve(jd, off, -Fu)
        except (LinAlgError, ValueError) as exc:
            raise SolverError(f"Newton Jacobian is singular at iteration {it}: {exc}") from exc
        if not np.isfinite(du).all():
            raise SolverError(f"Newton Jacobian is singular at iteration {it}")
        tau = 1.0
        for _ in range(40):
            trial = u + tau * du
            # u^q is concave, so full steps toward zero overshoot; back off geometrically instead
            trial = np.maximum(np.where(trial > 0, trial, 0.1 * u), floor)
            Ft = F(trial)
            rt = norm(trial, Ft)
            if rt < res * (1 - 1e-4 * tau) or converged(grid, a, q, trial, rt, params.tolerance):
                break
            tau *= 0.5
        else:
            raise SolverError(f"Newton line search failed; residual history {history[-5:]}")
        u, Fu, res = trial, Ft, rt
        history.append(res)
        if len(history) > NEWTON_STALL and history[-1] > 0.5 * history[-1 - NEWTON_STALL]:
            raise SolverError(f"Newton stagnated: residual {res:.3e} after {it + 1} steps")
    raise SolverError(f"Newton did not converge in {params.max_iterations} steps; residual {res:.3e}")


def monotone_iterate(grid: Grid, w: Weight, q: float, pair: SubSuperPair, params: SolveParams | None = None, trace: list | None = None) -> np.ndarray:
    """Monotone iteration from the subsolution of an ordered pair.

    Each step solves (-Δ_h + λ + a⁻ u_k^{q-1}) u_{k+1} = a⁺ u_k^q + λ u_k.
    The right side is nondecreasing and the absorption coefficient
    nonincreasing in u_k, so the sequence rises monotonically from sub
    toward the minimal solution above it, for every λ >= 0. If ``trace``
    is given, each accepted step appends (min increment, max(u - super)).
    """
    params = params or SolveParams()
    a = grid.check(w.values, "weight")
    sub = grid.check(pair.sub, "sub")
    sup = grid.check(pair.sup, "super")
    if (sub > sup).any():
        raise ValueError("monotone iteration needs sub <= super")
    if sub.max() <= 0:
        raise HypothesisError("subsolution is identically zero")
    ap, am = np.maximum(a, 0), np.maximum(-a, 0)
    m = grid.measures
    diag, off = grid.stiffness_bands()
    floor = 1e-300
    lam = 0.0
    u = sub.copy()
    scale = sup.max()
    res = relative_residual(grid, a, q, u)
    for it in range(params.max_iterations):
        absorb = am * np.maximum(u, floor) ** (q - 1)
        rhs = m * (ap * power(u, q) + lam * u)
        new = tridiag_solve(diag + m * (lam + absorb), off, rhs)
        step = new - u
        if step.min() < -1e-12 * scale:
            lam = max(2 * lam, q * np.abs(a).max() * max(sub.min(), 1e-12 * scale) ** (q - 1))
            log.info("monotonicity violated by %.3e at step %d; raising shift to %.3e", -step.min(), it, lam)
            if lam > 1e12 * max(np.abs(a).max(), 1.0):
                raise SolverError("monotone iteration: shift exceeded its cap")
            continue
        if trace is not None:
            trace.append((float(step.min()), float((new - sup).max())))
        u = np.maximum(new, u)
        res = relative_residual(grid, a, q, u)
        if converged(grid, a, q, u, res, params.tolerance):
            return u
        if params.newton_polish and it >= 50 and np.abs(step).max() <= 1e-6 * u.max() and u.min() > 1e-8 * u.max():
            try:
                v = newton_refine(grid, w, q, u, SolveParams(max_iterations=100, tolerance=params.tolerance))
            except SolverError:
                continue
            # keep the polished point only if it stays in the order interval
            if (v >= u - 1e-9 * scale).all() and (v <= sup + 1e-9 * scale).all():
                return v
    raise SolverError(f"monotone iteration did not converge in {params.max_iterations} steps; residual {res:.3e}")


def projected_gradient(grid: Grid, a, q: float, u) -> np.ndarray:
    """Pointwise KKT violation of the nonnegativity-constrained energy."""
    r = residual(grid, a, q, u)
    return np.where(u > 0, r, np.minimum(r, 0.0))


def _restricted(diag, off, active):
    """Tridiagonal bands with the active nodes decoupled and pinned (identity rows)."""
    d = diag.copy()
    e = off.copy()
    d[active] = 1.0
    e[active[:-1] | active[1:]] = 0.0
    return d, e


def minimize_energy(grid: Grid, w: Weight, q: float, init, params: SolveParams | None = None, trace: list | None = None) -> np.ndarray:
    """Critical point of E over u >= 0 by projected, H¹-preconditioned descent.

    Nodes with u = 0 and nonnegative gradient are held at zero; the
    remaining free nodes move along P⁻¹g with P = S + κM restricted to them,
    and u ← max(u - τd, 0) with Armijo backtracking in τ from 1. Holding
    the active set keeps the descent in the basin of the initial support,
    so dead-core solutions are reachable. If ``trace`` is given, the
    accepted energies are appended to it.
    """
    params = params or SolveParams(tolerance=1e-8)
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0,1), got {q}")
    a = grid.check(w.values, "weight")
    u = np.maximum(grid.check(init, "init"), 0.0).copy()
    if u.max() <= 0:
        raise HypothesisError("energy minimization needs a nonzero initial field")
    m = grid.measures
    diag, off = grid.stiffness_bands()
    kappa = max(np.abs(a).max(), 1.0)
    E = energy(grid, a, q, u)
    if trace is not None:
        trace.append(E)

    def stationary(v):
        if v.max() < 1e-14:
            raise TrivialSolutionError("energy descent collapsed to the trivial solution")
        pg = projected_gradient(grid, a, q, v)
        return converged(grid, a, q, v, np.abs(pg).max() / residual_scale(a, v, q), params.tolerance)

    for it in range(params.max_iterations):
        if stationary(u):
            return u
        g = m * residual(grid, a, q, u)
        active = (u <= 0) & (g >= 0)
        d, e = _restricted(diag + kappa * m, off, active)
        step = tridiag_solve(d, e, np.where(active, 0.0, g))
        tau = 1.0
        while tau > 1e-14:
            trial = np.maximum(u - tau * step, 0.0)
            Et = energy(grid, a, q, trial)
            if Et <= E + 1e-4 * np.dot(g, trial - u):
                break
            tau *= 0.5
        else:
            # no measurable descent left; finish with a Newton polish or give up
            v = _active_newton(grid, a, q, u, params.tolerance) if params.newton_polish else None
            if v is None or energy(grid, a, q, v) > E + 1e-12 * max(1.0, abs(E)):
                break
            u = v
            break
        u, E = trial, Et
        if trace is not None:
            trace.append(E)
        if params.newton_polish and it % 20 == 19:
            v = _active_newton(grid, a, q, u, params.tolerance)
            if v is not None:
                Ev = energy(grid, a, q, v)
                if Ev <= E + 1e-12 * max(1.0, abs(E)):
                    u, E = v, min(Ev, E)
                    if trace is not None:
                        trace.append(E)
    if stationary(u):
        return u
    pg = projected_gradient(grid, a, q, u)
    raise SolverError(f"energy minimization stalled; projected gradient {np.abs(pg).max():.3e}")


def _active_newton(grid: Grid, a, q: float, u, tol: float, steps: int = 40) -> np.ndarray | None:
    """Newton on the support of u with zeros held fixed; None on failure.

    Near a dead core the absorption term -q a u^{q-1} dominates the
    Jacobian, so the system stays well conditioned on the support tail.
    """
    m = grid.measures
    diag, off = grid.stiffness_bands()
    v = u.copy()
    for _ in range(steps):
        F = stiffness_apply(grid, v) - m * a * power(v, q)
        pg = np.where(v > 0, F, np.minimum(F, 0.0)) / m
        if converged(grid, a, q, v, np.abs(pg).max() / residual_scale(a, v, q), tol):
            return v
        grow = (v <= 0) & (F < 0)
        if grow.any():
            # seed from the local balance of diffusion and absorption: -Δu ≈ a u^q with u tiny
            with np.errstate(over="ignore", invalid="ignore"):
                seed = (-F / m / np.maximum(np.abs(a), 1e-300)) ** (1 / q)
            nb = np.maximum(np.concatenate(([0.0], v[:-1])), np.concatenate((v[1:], [0.0])))
            new = np.where(grow, np.where(a < 0, np.minimum(seed, 0.5 * nb), 0.5 * nb), v)
            # seeds that underflow stay at zero and are held fixed
            if (new > v).any():
                v = new
                continue
        active = v <= 0
        jd = diag - q * m * a * np.where(active, 1.0, v) ** (q - 1)
        d, e = _restricted(jd, off, active)
        try:
            dv = tridiag_solve(d, e, np.where(active, 0.0, -F))
        except (LinAlgError, ValueError):
            return None
        if not np.isfinite(dv).all():
            return None
        # u^q is concave: where the step would cross zero, shrink geometrically instead
        v = np.where(active, 0.0, np.where(v + dv > 0, v + dv, 0.1 * v))
    return None


# -- positivity ---------------------------------------------------------------


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    idx = np.flatnonzero(np.diff(np.concatenate(([0], mask.astype(np.int8), [0]))))
    return [(int(s), int(e) - 1) for s, e in zip(idx[::2], idx[1::2])]


BOUNDARY_RATIO = 0.25
BOUNDARY_LAYER_CELLS = 2


def classify_positivity(u, scale_tol: float = 1e-12, grid: Grid | None = None) -> PositivityClass:
    """Positivity class of a nonnegative field.

    A node is a zero when u <= scale_tol·max(u). A boundary node also counts
    as a zero when it is below BOUNDARY_RATIO times its neighbour: a
    Neumann field that is positive on the closed domain is flat there,
    while a field vanishing on the boundary rises steeply off it at every
    resolution. Zero runs touching the boundary and spanning at most
    BOUNDARY_LAYER_CELLS cells are boundary zeros (positiveInterior); any
    other zero run is a dead core. Without a grid the two end nodes are the
    boundary.
    """
    u = np.asarray(u, dtype=float)
    top = u.max() if u.size else 0.0
    n = u.size
    boundary = grid.boundary_nodes if grid is not None else np.array([0, n - 1])
    coords = grid.coordinates if grid is not None else np.arange(n, dtype=float)
    bmin = float(u[boundary].min())
    if top < 1e-300:
        return PositivityClass("trivial", float(u.min()), bmin, [(float(coords[0]), float(coords[-1]))])
    if u.min() < -scale_tol * top:
        raise ValueError(f"field takes negative values ({u.min():.3e})")
    zero = u <= scale_tol * top
    for b in boundary:
        nb = b + 1 if b == 0 else b - 1
        if u[b] <= BOUNDARY_RATIO * u[nb]:
            zero[b] = True
    runs = _runs(zero)
    zero_set = [(float(coords[s]), float(coords[e])) for s, e in runs]
    bset = set(int(b) for b in boundary)

    def boundary_layer(run):
        s, e = run
        return (s in bset or e in bset) and e - s <= BOUNDARY_LAYER_CELLS

    if not runs:
        cls = "interiorOfCone"
    elif all(boundary_layer(r) for r in runs):
        cls = "positiveInterior"
    else:
        cls = "deadCore"
    return PositivityClass(cls, float(u.min()), bmin, zero_set)


def homogeneity_rescale(u, q: float, c: float) -> np.ndarray:
    """c^{1/(1-q)} u, which solves the problem with weight c·a when u solves it with a."""
    return c ** (1 / (1 - q)) * np.asarray(u, dtype=float)
