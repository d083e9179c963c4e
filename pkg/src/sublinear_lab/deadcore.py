"""Dead cores: barrier profiles, the threshold distance d_δ, measurement, boundary positivity."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .eigen import mixed_eigen
from .errors import HypothesisError
from .grid import Grid, integrate
from .solve import SolveParams, large_supersolution, minimize_energy
from .weights import Weight, check_hypotheses, make_weight

log = logging.getLogger(__name__)

DEADCORE_TOL = 1e-6


@dataclass
class BarrierSpec:
    A: float
    alpha: float
    profile: np.ndarray
    c2_lhs: float | None = None
    c2_rhs: float | None = None

    @property
    def c2_holds(self) -> bool | None:
        if self.c2_rhs is None:
            return None
        return self.c2_lhs <= self.c2_rhs * (1 + 1e-12)


@dataclass
class DeadCoreReport:
    delta: float
    q: float
    measured_zero_set: list[tuple[float, float]]
    predicted_core: list[tuple[float, float]]
    d_delta: float
    a0: float
    uniform_bound: float
    containment_ok: bool
    sup_norm: float
    core_distance: float | None
    solution: np.ndarray = field(repr=False, default=None)

    def to_row(self) -> dict:
        left = min((z[0] for z in self.measured_zero_set), default=float("nan"))
        right = max((z[1] for z in self.measured_zero_set), default=float("nan"))
        return {
            "delta": self.delta,
            "q": self.q,
            "dDelta": self.d_delta,
            "coreLeft": left,
            "coreRight": right,
            "containmentOK": self.containment_ok,
        }


def _c2_constant(alpha: float, N: int) -> float:
    return alpha * (alpha - 1) + (N - 1) * alpha


def barrier_profile(grid: Grid, q: float, A: float, delta_a0: float | None = None) -> BarrierSpec:
    """z₁(r) = A (r - 1/2)^α for r > 1/2 and 0 inside, α = 2/(1-q), on the unit ball.

    With ``delta_a0`` (the product δ·a₀) the sufficient condition for
    Δz₁ <= δ a₀ z₁^q is evaluated as A <= (δa₀ / (α(α-1) + (N-1)α))^{1/(1-q)}.
    """
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0,1), got {q}")
    if not A > 0:
        raise ValueError(f"A must be positive, got {A}")
    if grid.kind != "ball" or not math.isclose(grid.spec.R, 1.0):
        raise ValueError("barrier profiles live on the unit ball")
    alpha = 2 / (1 - q)
    r = grid.coordinates
    z = np.where(r > 0.5, A * np.maximum(r - 0.5, 0.0) ** alpha, 0.0)
    if delta_a0 is None:
        return BarrierSpec(A, alpha, z)
    rhs = (delta_a0 / _c2_constant(alpha, grid.N)) ** (1 / (1 - q))
    return BarrierSpec(A, alpha, z, A, rhs)


def barrier_window(q: float, N: int, delta: float, a0: float, eps: float) -> bool:
    """Whether some A satisfies 2^α ε <= A <= (δa₀/(α(α-1)+(N-1)α))^{1/(1-q)}."""
    alpha = 2 / (1 - q)
    return 2**alpha * eps <= (delta * a0 / _c2_constant(alpha, N)) ** (1 / (1 - q))


def deadcore_threshold(q: float, N: int, a0: float, delta: float, C: float) -> float:
    """d_δ = 2 (C (ᾱ(ᾱ-1) + (N-1)ᾱ) / (δ a₀))^{1/2} with ᾱ = 2/(1-q)."""
    for name, val in (("q", q), ("N", N), ("a0", a0), ("delta", delta), ("C", C)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    if not q < 1:
        raise ValueError(f"q must be below 1, got {q}")
    alpha = 2 / (1 - q)
    return 2 * math.sqrt(C * _c2_constant(alpha, N) / (delta * a0))


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    idx = np.flatnonzero(np.diff(np.concatenate(([0], mask.astype(np.int8), [0]))))
    return [(int(s), int(e) - 1) for s, e in zip(idx[::2], idx[1::2])]


def _core_runs(u: np.ndarray, scale_tol: float, boundary: set[int]) -> list[tuple[int, int]]:
    top = u.max()
    if top <= 0:
        return []
    runs = _runs(u <= scale_tol * top)
    strict_tol = min(scale_tol**2, 1e-12)
    keep = []
    for s, e in runs:
        if s not in boundary and e not in boundary:
            keep.append((s, e))
            continue
        # a boundary-touching run is a dead core only if it is flat well below
        # the tolerance over more than two cells, not a steep boundary layer
        flat = _runs(u[s : e + 1] <= strict_tol * top)
        if any(fe - fs > 2 and ((s + fs) in boundary or (s + fe) in boundary) for fs, fe in flat):
            keep.append((s, e))
    return keep


def measure_deadcore(u, scale_tol: float = DEADCORE_TOL, grid: Grid | None = None) -> list[tuple[float, float]]:
    """Maximal intervals where u <= scale_tol·max(u), as coordinate pairs.

    Boundary layers of solutions that merely vanish on ∂Ω are excluded.
    """
    u = np.asarray(u, dtype=float)
    coords = grid.coordinates if grid is not None else np.arange(u.size, dtype=float)
    boundary = set(int(b) for b in (grid.boundary_nodes if grid is not None else (0, u.size - 1)))
    return [(float(coords[s]), float(coords[e])) for s, e in _core_runs(u, scale_tol, boundary)]


def _component_intervals(grid: Grid, mask: np.ndarray) -> list[tuple[float, float]]:
    """Open intervals (lo, hi) whose interior nodes are the runs of ``mask``.

    Endpoints sit on the first node outside the run, or on the domain edge.
    """
    x = grid.coordinates
    out = []
    for s, e in _runs(mask):
        lo = x[s - 1] if s > 0 else x[0]
        hi = x[e + 1] if e < grid.n - 1 else x[-1]
        out.append((float(lo), float(hi)))
    return out


def _shrink(intervals, d: float) -> list[tuple[float, float]]:
    return [(lo + d, hi - d) for lo, hi in intervals if hi - lo > 2 * d]


def shrunken_support(grid: Grid, b2, d: float) -> list[tuple[float, float]]:
    """Components of {b2 > 0} with every point farther than d from their boundary."""
    return _shrink(_component_intervals(grid, grid.check(b2, "b2") > 0), d)


def _contains(outer, inner, slack: float) -> bool:
    return all(any(lo - slack <= a and b <= hi + slack for lo, hi in outer) for a, b in inner)


def verify_deadcore_formation(
    grid: Grid,
    b1,
    b2,
    sigma: float,
    qbar: float,
    deltas,
    params: SolveParams | None = None,
) -> list[DeadCoreReport]:
    """Solve on a_δ = b₁ - δ b₂ along a δ ladder and compare cores with the barrier prediction.

    Runs at q ∈ {q̄/2, q̄}. C is the maximum of the constructive
    supersolution at δ₂ = min(deltas) with floor 1 over both exponents.
    """
    if grid.kind != "interval":
        raise ValueError("dead-core sweeps are implemented on interval grids")
    b1 = grid.check(b1, "b1")
    b2 = grid.check(b2, "b2")
    if b1.min() < 0 or b2.min() < 0:
        raise HypothesisError("b1 and b2 must be nonnegative")
    if ((b1 > 0) & (b2 > 0)).any():
        raise HypothesisError("supports of b1 and {b2 > 0} overlap")
    deltas = sorted(float(d) for d in deltas)
    d2 = deltas[0]
    qs = (qbar / 2, qbar)
    w2 = make_weight(grid, {"type": "delta", "b1": b1, "b2": b2, "delta": d2})
    if not integrate(grid, w2.values) < 0:
        raise HypothesisError(f"∫(b1 - δ₂ b2) must be negative at δ₂ = {d2}")
    C = max(large_supersolution(grid, w2, q, floor=1.0).max() for q in qs)
    G = _component_intervals(grid, b2 > 0)
    G_half = _shrink(G, sigma / 2)
    x = grid.coordinates
    in_half = np.zeros(grid.n, dtype=bool)
    for lo, hi in G_half:
        in_half |= (x > lo) & (x < hi)
    if not in_half.any():
        raise HypothesisError("G_{σ/2} contains no grid nodes")
    a0 = float(b2[in_half].min())
    params = params or SolveParams(tolerance=1e-8)
    reports = []
    for delta in deltas:
        w = make_weight(grid, {"type": "delta", "b1": b1, "b2": b2, "delta": delta})
        for q in qs:
            u = minimize_energy(grid, w, q, np.ones(grid.n), params)
            cores = measure_deadcore(u, DEADCORE_TOL, grid)
            dd = deadcore_threshold(qbar, grid.N, a0, delta, C)
            predicted = _shrink(G_half, dd)
            ok = _contains(cores, predicted, 2 * grid.h)
            dist = None
            if cores:
                edges = [p for lo, hi in G for p in (lo, hi)]
                dist = float(min(min(abs(c - e) for e in edges) for z in cores for c in z))
            reports.append(DeadCoreReport(delta, q, cores, predicted, dd, a0, C, ok, float(u.max()), dist, u))
            log.info("δ=%g q=%g core=%s d_δ=%.4g", delta, q, cores, dd)
    return reports


def core_distance_slope(reports: list[DeadCoreReport], q: float) -> float:
    """Least-squares slope of log(core distance to ∂G) against log δ at exponent q."""
    pts = [(math.log(r.delta), math.log(r.core_distance)) for r in reports if r.q == q and r.core_distance]
    if len(pts) < 2:
        raise ValueError("need at least two nonempty cores to fit a slope")
    X, Y = np.array(pts).T
    return float(np.polyfit(X, Y, 1)[0])


def empirical_delta0(reports: list[DeadCoreReport], q: float) -> float | None:
    """Smallest tested δ whose measured core is nonempty."""
    hits = [r.delta for r in reports if r.q == q and r.measured_zero_set]
    return min(hits) if hits else None


def barrier_delta0(C: float, a0: float, qbar: float, N: int, half_width: float) -> float:
    """Smallest δ with d_δ below the half-width of G_{σ/2} (a nonempty prediction)."""
    alpha = 2 / (1 - qbar)
    return 4 * C * _c2_constant(alpha, N) / (a0 * half_width**2)


@dataclass
class BoundaryPositivityReport:
    sigma1: float
    epsilon: float
    boundary_values: list[float]
    positive: bool

    def to_json(self) -> dict:
        return {"sigma1": self.sigma1, "epsilon": self.epsilon, "boundaryValues": self.boundary_values, "positive": self.positive}


def boundary_positivity_check(grid: Grid, w: Weight, collar_edge: float, q: float, u) -> BoundaryPositivityReport:
    """Largest ε with ε ψ₁ <= u on the collar (collar_edge, R) of a ball.

    ψ₁ is the principal mixed eigenfunction of -Δψ = σ a⁺ ψ on the collar
    (Dirichlet at its inner edge). Needs a connected Ω₊ containing the collar.
    """
    if grid.kind != "ball":
        raise ValueError("a boundary collar of an interval is disconnected; use the radial half-domain")
    u = grid.check(u, "u")
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0,1), got {q}")
    rep = check_hypotheses(w)
    r = grid.coordinates
    collar = r > collar_edge
    a = w.values
    if (a[collar] <= 0).any():
        raise HypothesisError("collar is not inside Ω₊ (a <= 0 somewhere on it)")
    if not rep.H1prime:
        raise HypothesisError("Ω₊ is not connected")
    pair = mixed_eigen(grid, w, (collar_edge, grid.spec.R))
    psi = pair.eigenfunction
    nodes = collar & (psi > 0)
    eps = float((u[nodes] / psi[nodes]).min())
    bvals = [float(u[b]) for b in grid.boundary_nodes]
    return BoundaryPositivityReport(pair.eigenvalue, eps, bvals, eps > 0 and min(bvals) > 0)
