"""Explicit radial subsolutions and their verification.

Two assemblies are provided. ``build_cc`` treats weights that are
nonnegative on an inner ball and nonpositive on the surrounding annulus;
``build_rad2`` treats the reverse sign pattern. Both glue an inner and an
outer profile at R0 and return the glued field together with a log of
every inequality checked along the way.

Radial quadratures are discrete flux sums on the grid's own cell measures
and face areas, so the finite-volume residual of the glued field measures
the construction and not a quadrature mismatch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisError, SolverError
from .grid import Grid, power, stiffness_apply, tridiag_solve
from .weights import ConditionReport, Weight, check_radial_conditions

log = logging.getLogger(__name__)

SIGN_GATE = 1e-10
SEARCH_BUDGET = 60


@dataclass
class Check:
    name: str
    lhs: float
    rhs: float
    holds: bool

    def __post_init__(self):
        self.lhs, self.rhs, self.holds = float(self.lhs), float(self.rhs), bool(self.holds)

    def to_json(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "holds": self.holds}


@dataclass
class CCConstruction:
    q: float
    R0: float
    C: float
    gamma: float
    phi: np.ndarray
    z: np.ndarray
    v: np.ndarray
    glued: np.ndarray
    subsolution: np.ndarray
    flux_check: tuple[float, float, bool]
    conditions: ConditionReport
    trail: list[Check] = field(default_factory=list)


@dataclass
class Rad2Construction:
    q: float
    R0: float
    epsilon: float
    delta: float
    gamma_eps: float
    gamma0: float
    C_eps: float
    u_delta_eps: np.ndarray
    z_inner: np.ndarray
    K: float
    w_outer: np.ndarray
    v_outer: np.ndarray
    glued: np.ndarray
    subsolution: np.ndarray
    conditions: ConditionReport
    trail: list[Check] = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return all(c.holds for c in self.trail)


@dataclass
class ResidualReport:
    max_weak_residual: float
    interface_flux_gap: float
    verdict: bool
    tolerance: float

    def to_json(self) -> dict:
        return {
            "maxWeakResidual": self.max_weak_residual,
            "interfaceFluxGap": self.interface_flux_gap,
            "verdict": self.verdict,
            "tolerance": self.tolerance,
        }


@dataclass
class RadialView:
    """Grid nodes listed outward from the centre, split at R0."""

    order: np.ndarray  # grid indices in radial order
    r: np.ndarray
    measures: np.ndarray
    faces: np.ndarray
    h: float
    N: int
    omega: float
    R: float
    k: int  # radial index of the gluing node
    R0: float

    def to_grid(self, radial_values: np.ndarray) -> np.ndarray:
        out = np.empty_like(radial_values)
        out[self.order] = radial_values
        return out


def radial_view(grid: Grid, R0: float, side: str = "inner") -> RadialView:
    if grid.kind == "ball":
        order = np.arange(grid.n)
        r = grid.coordinates
        faces = grid.faces
        R, N, omega = grid.spec.R, grid.N, grid.omega
        rho0 = R0
    else:
        if side == "left":
            order = np.arange(grid.n)
            r = grid.coordinates - grid.spec.x0
            rho0 = R0 - grid.spec.x0
        elif side == "right":
            order = np.arange(grid.n)[::-1]
            r = grid.spec.x1 - grid.coordinates[::-1]
            rho0 = grid.spec.x1 - R0
        else:
            raise ValueError("interval splits need side='left' or 'right'")
        faces = grid.faces[::-1] if side == "right" else grid.faces
        R, N, omega = grid.spec.x1 - grid.spec.x0, 1, 1.0
    if not 0 < rho0 < R:
        raise ValueError(f"R0 must lie strictly inside (0, {R}), got {rho0}")
    k = int(np.argmin(np.abs(r - rho0)))
    if abs(r[k] - rho0) > 1e-9 * grid.h:
        log.warning("R0=%.6g is not a grid node; gluing at %.6g", rho0, r[k])
    if not 2 <= k <= grid.n - 3:
        raise ValueError("R0 is too close to the centre or the boundary for this grid")
    return RadialView(order, np.asarray(r, float), grid.measures[order], np.asarray(faces, float), grid.h, N, omega, R, k, float(r[k]))


def outward_double_integral(view: RadialView, f: np.ndarray) -> np.ndarray:
    """Discrete ∫_r^R t^{1-N} ∫_t^R f(y) y^{N-1} dy dt on nodes k..n-1.

    Built from the finite-volume balance: the flux through face j+1/2 equals
    the sum of m_i f_i over the cells beyond it, with zero flux at R.
    Values at nodes below k are left at zero.
    """
    n = view.r.size
    tail = np.cumsum((view.measures * f)[::-1])[::-1]  # tail[i] = Σ_{j>=i} m_j f_j
    out = np.zeros(n)
    for i in range(n - 1, view.k, -1):
        out[i - 1] = out[i] + view.h * tail[i] / view.faces[i - 1]
    return out


def one_sided_slopes(view: RadialView, u: np.ndarray) -> tuple[float, float]:
    """Second-order one-sided radial derivatives of u at the gluing node (inner, outer)."""
    k, h = view.k, view.h
    inner = (3 * u[k] - 4 * u[k - 1] + u[k - 2]) / (2 * h)
    outer = (-3 * u[k] + 4 * u[k + 1] - u[k + 2]) / (2 * h)
    return float(inner), float(outer)


def _inner_dirichlet(view: RadialView, coef: np.ndarray, q: float, boundary_value: float, tol: float = 1e-13) -> np.ndarray:
    """Solve -Δv = coef·v^q on nodes 0..k-1 with v = boundary_value at node k (coef >= 0)."""
    k = view.k
    r_faces = view.faces / view.h
    diag = np.zeros(k)
    diag[:] += r_faces[:k]
    diag[1:] += r_faces[: k - 1]
    off = -r_faces[: k - 1]
    m = view.measures[:k]
    c = coef[:k]
    bterm = np.zeros(k)
    bterm[-1] = r_faces[k - 1] * boundary_value
    v = np.full(k, boundary_value)
    # the constant boundary value is a subsolution since coef >= 0; monotone
    # sweeps contract at roughly rate q, so run them close to the limit before
    # Newton, whose Jacobian is indefinite far below the solution
    for _ in range(20000):
        new = tridiag_solve(diag, off, m * c * power(v, q) + bterm)
        done = np.abs(new - v).max() <= 1e-12 * new.max()
        v = new
        if done:
            break
    scale = max(np.abs(c).max() * v.max() ** q, 1e-300)
    for _ in range(100):
        F = diag * v
        F[:-1] += off * v[1:]
        F[1:] += off * v[:-1]
        F -= m * c * power(v, q) + bterm
        res = np.abs(F / m).max() / scale
        if res <= tol:
            return v
        dv = tridiag_solve(diag - q * m * c * v ** (q - 1), off, -F)
        if not np.all(np.isfinite(dv)):
            break
        tau = 1.0
        while tau > 1e-8 and (v + tau * dv).min() <= 0:
            tau *= 0.5
        v = v + tau * dv
    if res > 1e-9:
        raise SolverError(f"inner Dirichlet solve did not converge (residual {res:.3e})")
    return v


def build_cc(grid: Grid, w: Weight, q: float, R0: float, side: str = "inner") -> CCConstruction:
    """Subsolution for weights with a >= 0 inside B_{R0} and a <= 0 on the annulus."""
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0,1), got {q}")
    cond = check_radial_conditions(w, q, R0, side)
    failure = cond.first_failure("cc")
    if failure is not None:
        name, lhs, rhs = failure
        raise HypothesisError(f"condition {name} fails (lhs={lhs:.6g}, rhs={rhs:.6g})")
    view = radial_view(grid, R0, side)
    a = w.values[view.order]
    am = np.maximum(-a, 0.0)
    C = (1 - q) / (1 + q)
    gamma = 1 / (1 - q)
    k = view.k
    phi = outward_double_integral(view, am)
    z = np.zeros_like(phi)
    z[k:] = (C * phi[k:]) ** gamma
    v = _inner_dirichlet(view, gamma * np.maximum(a, 0.0), q, z[k])
    glued = z.copy()
    glued[:k] = v
    v_slope, z_slope = one_sided_slopes(view, glued)
    scale = max(abs(v_slope), abs(z_slope), 1e-300)
    ok = v_slope <= z_slope + 1e-8 * scale
    trail = [
        Check("inferno", cond.inferno_lhs, cond.inferno_rhs, cond.inferno_holds),
        Check("flux", v_slope, z_slope, ok),
    ]
    if not ok:
        raise HypothesisError(f"interface flux check fails: v'(R0)={v_slope:.6g} > z'(R0)={z_slope:.6g}")
    glued_grid = view.to_grid(glued)
    return CCConstruction(
        q=q,
        R0=view.R0,
        C=C,
        gamma=gamma,
        phi=view.to_grid(phi),
        z=view.to_grid(z),
        v=view.to_grid(np.concatenate((v, np.full(glued.size - k, np.nan)))),
        glued=glued_grid,
        subsolution=gamma ** (-1 / (1 - q)) * glued_grid,
        flux_check=(v_slope, z_slope, ok),
        conditions=cond,
        trail=trail,
    )


def _rad2_constants(q: float, eps: float, R0: float, N: int, amax: float) -> tuple[float, float]:
    gamma_eps = (1 - eps) / (1 - q)
    C_eps = (R0 ** (2 * eps) / 2 * amax / (2 * (gamma_eps - 1) + N) + eps) ** (1 / (1 - eps))
    return gamma_eps, C_eps


def _casa(C: float, gamma_eps: float, eps: float, delta: float, N: int, amax: float, r: np.ndarray) -> np.ndarray:
    u = C * r**2 + delta
    return 4 * C**2 * r**2 * (gamma_eps - 1) / u + 2 * N * C - amax * u**eps


def build_rad2(grid: Grid, w: Weight, q: float, R0: float, side: str = "inner") -> Rad2Construction:
    """Subsolution for weights with a⁻ concentrated in B_{R0} and a >= 0 on the annulus."""
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0,1), got {q}")
    cond = check_radial_conditions(w, q, R0, side)
    failure = cond.first_failure("rad2")
    if failure is not None:
        name, lhs, rhs = failure
        raise HypothesisError(f"condition {name} fails (lhs={lhs:.6g}, rhs={rhs:.6g})")
    view = radial_view(grid, R0, side)
    N, k, rho0 = view.N, view.k, view.R0
    a = w.values[view.order]
    amax = cond.aminus_sup_inner
    outer_int = cond.outer_integral / view.omega  # ∫_{R0}^R a y^{N-1} dy
    trail: list[Check] = [Check("sipi", cond.sipi_lhs, cond.sipi_rhs, cond.sipi_holds)]

    eps = q / 2
    for _ in range(SEARCH_BUDGET):
        gamma_eps, C_eps = _rad2_constants(q, eps, rho0, N, amax)
        lhs_b = 2 * C_eps ** (1 - eps) * rho0**N
        rhs_b = rho0 ** (2 * eps) * outer_int
        if lhs_b < rhs_b:
            break
        eps /= 2
    else:
        raise HypothesisError(f"no ε found for inequality b (last lhs={lhs_b:.6g}, rhs={rhs_b:.6g})")
    u0R = C_eps * rho0**2
    trail.append(Check("a", 2 * C_eps * rho0, u0R**eps * outer_int / rho0 ** (N - 1), 2 * C_eps * rho0 < u0R**eps * outer_int / rho0 ** (N - 1)))
    trail.append(Check("b", lhs_b, rhs_b, True))

    r_fine = np.union1d(np.linspace(0.0, rho0, 4001), view.r[: k + 1])
    delta = 1.0
    for _ in range(SEARCH_BUDGET):
        casa = _casa(C_eps, gamma_eps, eps, delta, N, amax, r_fine)
        if casa.min() > 0:
            break
        delta /= 2
    else:
        raise HypothesisError(f"no δ found for inequality casa (min lhs {casa.min():.6g})")
    trail.append(Check("casa", float(casa.min()), 0.0, True))

    uR0 = C_eps * rho0**2 + delta
    ad_lhs = 2 * C_eps * rho0
    ad_rhs = uR0**eps * outer_int / rho0 ** (N - 1)
    trail.append(Check("ad", ad_lhs, ad_rhs, ad_lhs < ad_rhs))

    gamma0 = 1 / (1 - q)
    r = view.r
    u_de = C_eps * r**2 + delta
    z = u_de**gamma_eps
    # (laaa): Δz - γ_ε‖a⁻‖ z^q on the inner nodes, analytic Laplacian of the profile
    ri, ui = r[: k + 1], u_de[: k + 1]
    lap_z = gamma_eps * (4 * C_eps**2 * ri**2 * (gamma_eps - 1) * ui ** (gamma_eps - 2) + 2 * N * C_eps * ui ** (gamma_eps - 1))
    laaa = lap_z - gamma_eps * amax * ui ** (gamma_eps * q)
    trail.append(Check("laaa", float(laaa.min()), 0.0, bool(laaa.min() >= -1e-12 * np.abs(lap_z).max())))

    ratio = gamma_eps / gamma0
    phi = outward_double_integral(view, a)
    K = ratio * phi[k] + uR0 ** (gamma_eps / gamma0)
    w_out = np.zeros_like(r)
    w_out[k:] = K - ratio * phi[k:]
    v_out = np.zeros_like(r)
    v_out[k:] = w_out[k:] ** gamma0
    # (ann): -Δv - γ_ε a v^q = -γ0(γ0-1) w^{γ0-2} w'² <= 0 on the annulus
    wp = np.gradient(w_out[k:], view.h)
    ann = -gamma0 * (gamma0 - 1) * w_out[k:] ** (gamma0 - 2) * wp**2
    trail.append(Check("ann", float(ann.max()), 0.0, bool(ann.max() <= 0)))
    # (fin): z'(R0) <= v'(R0), from the closed-form derivatives
    z_slope = gamma_eps * uR0 ** (gamma_eps - 1) * 2 * C_eps * rho0
    v_slope = gamma0 * w_out[k] ** (gamma0 - 1) * ratio * outer_int / rho0 ** (N - 1)
    trail.append(Check("fin", z_slope, v_slope, z_slope <= v_slope))
    glued = np.where(np.arange(r.size) <= k, z, v_out)
    failed = [c.name for c in trail if not c.holds]
    if failed:
        raise HypothesisError(f"condition {failed[0]} fails in the rad2 assembly")
    glued_grid = view.to_grid(glued)
    return Rad2Construction(
        q=q,
        R0=rho0,
        epsilon=eps,
        delta=delta,
        gamma_eps=gamma_eps,
        gamma0=gamma0,
        C_eps=C_eps,
        u_delta_eps=view.to_grid(np.where(np.arange(r.size) <= k, u_de, np.nan)),
        z_inner=view.to_grid(np.where(np.arange(r.size) <= k, z, np.nan)),
        K=float(K),
        w_outer=view.to_grid(np.where(np.arange(r.size) >= k, w_out, np.nan)),
        v_outer=view.to_grid(np.where(np.arange(r.size) >= k, v_out, np.nan)),
        glued=glued_grid,
        subsolution=gamma_eps ** (-1 / (1 - q)) * glued_grid,
        conditions=cond,
        trail=trail,
    )


def verify_weak_subsolution(grid: Grid, w: Weight, q: float, u, tol: float = 1e-6, interface: int | None = None) -> ResidualReport:
    """Test ∫∇u·∇η - ∫a u^q η <= tol·∫η for every nodal hat function η.

    ``tol`` is relative to max|a|·max(u)^q. With ``interface`` (a grid
    index), the report also gives the jump u'(left) - u'(right) there;
    a subsolution needs it nonpositive in the outward direction.
    """
    u = grid.check(u, "u")
    if u.min() < 0:
        raise ValueError("weak subsolution test needs u >= 0")
    a = grid.check(w.values, "weight")
    weak = (stiffness_apply(grid, u) - grid.measures * a * power(u, q)) / grid.measures
    scale = max(np.abs(a).max() * max(u.max(), 0.0) ** q, 1e-300)
    worst = float(weak.max() / scale)
    gap = 0.0
    if interface is not None:
        i, h = interface, grid.h
        left = (3 * u[i] - 4 * u[i - 1] + u[i - 2]) / (2 * h)
        right = (-3 * u[i] + 4 * u[i + 1] - u[i + 2]) / (2 * h)
        gap = float(max(left - right, 0.0) / max(abs(left), abs(right), 1e-300))
    return ResidualReport(worst, gap, worst <= tol and gap <= tol, tol)
