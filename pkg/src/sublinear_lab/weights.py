"""Weights a(x): closed-form corpus cases, sampling, and condition checks."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .grid import Grid, GridSpec, build_grid, integrate

SIGN_TOL = 1e-12


@dataclass(frozen=True)
class CorpusCase:
    name: str
    parameters: dict = field(default_factory=dict)

    @property
    def analytic_solution_available(self) -> bool:
        return self.name in ("remark-q0", "ti-cubic", "ti-quartic")


@dataclass(frozen=True, eq=False)
class Weight:
    grid: Grid
    values: np.ndarray
    definition: dict
    pointwise: Callable | None = None
    """Closed form of a as a function of the grid coordinate, when known."""

    def scaled(self, c: float) -> Weight:
        fn = None if self.pointwise is None else (lambda x, f=self.pointwise: c * f(x))
        return Weight(self.grid, c * self.values, {**self.definition, "scale": c * self.definition.get("scale", 1.0)}, fn)

    @property
    def plus(self) -> np.ndarray:
        return np.maximum(self.values, 0.0)

    @property
    def minus(self) -> np.ndarray:
        return np.maximum(-self.values, 0.0)


@dataclass
class HypothesisReport:
    integral: float
    changes_sign: bool
    H0: bool
    positive_components: list[tuple[int, int]]
    H1: bool
    H1prime: bool
    Hplus: bool = True


@dataclass
class ConditionReport:
    R0: float
    cq_threshold: float
    inferno_lhs: float
    inferno_rhs: float
    inferno_holds: bool
    cc_signs_ok: bool
    monotone_outer_ok: bool
    sipi_lhs: float
    sipi_rhs: float
    sipi_holds: bool
    rad2_signs_ok: bool
    K: float
    KN_interval: tuple[float, float] | None
    aminus_sup_inner: float = 0.0
    outer_integral: float = 0.0

    def first_failure(self, construction: str) -> tuple[str, float, float] | None:
        """Name and sides of the first violated inequality for a construction."""
        if construction == "cc":
            if not self.cc_signs_ok:
                return ("cc-signs", float("nan"), float("nan"))
            if not self.monotone_outer_ok:
                return ("cc-monotone", float("nan"), float("nan"))
            if not self.inferno_holds:
                return ("inferno", self.inferno_lhs, self.inferno_rhs)
            return None
        if not self.rad2_signs_ok:
            return ("rad2-signs", float("nan"), float("nan"))
        if not self.sipi_holds:
            return ("sipi", self.sipi_lhs, self.sipi_rhs)
        return None


# -- closed-form corpus ------------------------------------------------------


def _exponent(q: float) -> float:
    return 2.0 / (1.0 - q)


def remark_q0_weight(q: float) -> Callable:
    if not 0 < q < 1:
        raise ValueError(f"remark-q0 needs q in (0,1), got {q}")
    r = _exponent(q)
    return lambda x: r ** (1 - 2 / r) * (1 - r * np.cos(x) ** 2)


def cubic_coefficients(q: float) -> tuple[float, float, float, float]:
    """(α, β, γ, δ) of the cubic gluing polynomial p on [1, 2]."""
    if not 1 / 3 <= q < 1:
        raise ValueError(f"ti-cubic needs q in [1/3, 1), got {q}")
    r = _exponent(q)
    return (
        -(2 ** (r - 2)) * (r + 1) / 3,
        2 ** (r - 3) * (3 * r + 1),
        -(2 ** (r - 1)) * (r - 1),
        2 ** (r - 3) / 3 * (24 / r + 5 * r - 13),
    )


def quartic_coefficients(q: float, K: float) -> tuple[float, ...]:
    """(α, β, γ, δ, μ) of the quartic p_K with p_K(2) = K."""
    if not 0 < q < 1 / 3:
        raise ValueError(f"ti-quartic needs q in (0, 1/3), got {q}")
    if not K > 0:
        raise ValueError(f"ti-quartic needs K > 0, got {K}")
    r = _exponent(q)
    s = 2**r / r - K
    c = 2 ** (r - 3)
    return (
        3 * s + c * (r + 7),
        -16 * s + c * (-6 * r - 38),
        30 * s + c * (13 * r + 71),
        -24 * s - c * (12 * r + 52),
        8 * 2**r / r - 7 * K + c * (4 * r + 12),
    )


def _glue_weight(q: float, coeffs) -> Callable:
    """Even weight on (-2, 2): constant on [-1, 1], -p''/p^q for 1 <= |x| <= 2."""
    r = _exponent(q)
    p = np.polynomial.Polynomial(coeffs[::-1])
    d2 = p.deriv(2)
    inner = -(r - 1) * r**q

    def a(x):
        s = np.abs(np.asarray(x, dtype=float))
        outer = -d2(s) / np.maximum(p(s), 1e-300) ** q
        return np.where(s <= 1.0, inner, outer)

    return a


def _glue_solution(q: float, coeffs) -> Callable:
    r = _exponent(q)
    p = np.polynomial.Polynomial(coeffs[::-1])

    def u1(x):
        x = np.asarray(x, dtype=float)
        f = np.maximum(x + 1, 0.0) ** r / r
        return np.where(x <= -1, 0.0, np.where(x <= 1, f, p(x)))

    return u1


def select_quartic_K(q: float, K0: float = 1.0, factor: float = 2.0, max_steps: int = 60) -> float:
    """Smallest K on a geometric ladder with a_K sign-changing and ∫a_K < 0."""
    K = K0
    for _ in range(max_steps):
        coeffs = quartic_coefficients(q, K)
        p = np.polynomial.Polynomial(coeffs[::-1])
        s = np.linspace(1, 2, 2001)
        if np.all(p(s) > 0):
            a = _glue_weight(q, coeffs)
            vals = a(s)
            total, _ = quad(lambda x: float(a(x)), -2, 2, points=[-1, 1], limit=200)
            if vals.min() < 0 < vals.max() and total < 0:
                return K
        K *= factor
    raise ValueError(f"no admissible K found for q={q} within {max_steps} doublings")


def _corpus_function(case: CorpusCase) -> tuple[Callable, dict]:
    """Closed form a(x) and the domain it lives on."""
    p = case.parameters
    if case.name == "remark-q0":
        return remark_q0_weight(p["q"]), {"kind": "interval", "x0": 0.0, "x1": math.pi}
    if case.name == "ti-cubic":
        return _glue_weight(p["q"], cubic_coefficients(p["q"])), {"kind": "interval", "x0": -2.0, "x1": 2.0}
    if case.name == "ti-quartic":
        K = p.get("K") or select_quartic_K(p["q"])
        return _glue_weight(p["q"], quartic_coefficients(p["q"], K)), {"kind": "interval", "x0": -2.0, "x1": 2.0, "K": K}
    raise ValueError(f"unknown corpus case {case.name!r}")


def corpus_domain(case: CorpusCase) -> dict:
    """The interval an interval corpus weight lives on."""
    return _corpus_function(case)[1]


def _sample_points(grid: Grid, domain: dict) -> np.ndarray:
    """Map grid nodes to x-coordinates of an interval-defined weight.

    A 1D ball grid is read as the half-domain of an interval weight that is
    even about its midpoint.
    """
    L = domain["x1"] - domain["x0"]
    if grid.kind == "interval":
        if not (np.isclose(grid.spec.x0, domain["x0"]) and np.isclose(grid.spec.x1, domain["x1"])):
            raise ValueError(f"weight lives on ({domain['x0']}, {domain['x1']}), grid is ({grid.spec.x0}, {grid.spec.x1})")
        return grid.coordinates
    if grid.N == 1 and np.isclose(grid.spec.R, L / 2):
        return domain["x0"] + L / 2 + grid.coordinates
    raise ValueError("interval corpus case needs an interval grid or its 1D half-domain ball")


def _region_measure(grid: Grid, lo, hi):
    lo = np.maximum(lo, 0.0) if grid.kind == "ball" else lo
    hi = np.maximum(hi, lo)
    if grid.kind == "ball":
        return grid.omega * (hi**grid.N - lo**grid.N) / grid.N
    return hi - lo


def _cell_edges(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    x, h = grid.coordinates, grid.h
    lo, hi = x - h / 2, x + h / 2
    if grid.kind == "ball":
        lo[0] = 0.0
        hi[-1] = grid.spec.R
    else:
        lo[0], hi[-1] = x[0], x[-1]
    return lo, hi


def piecewise_constant(grid: Grid, regions) -> np.ndarray:
    """Cell averages of Σ value·χ_[lo, hi); exact integrals for any node placement."""
    lo, hi = _cell_edges(grid)
    out = np.zeros(grid.n)
    for a, b, value in regions:
        out += value * _region_measure(grid, np.maximum(lo, a), np.minimum(hi, b))
    return out / grid.measures


def _piecewise_function(regions) -> Callable:
    def a(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for lo, hi, value in regions:
            out = out + value * ((x >= lo) & (x < hi))
        return out

    return a


def make_weight(grid: Grid, case) -> Weight:
    """Sample a weight on ``grid``.

    ``case`` is a :class:`CorpusCase` or a dict definition with key ``type``:
    ``piecewise`` (``regions`` as [lo, hi, value] in x or r), ``sampled``
    (``values``) or ``delta`` (``b1``, ``b2``, ``delta``; a_δ = b₁ − δ b₂).
    """
    if isinstance(case, CorpusCase):
        if case.name == "rem-I01":
            if grid.kind != "ball" or not np.isclose(grid.spec.R, 1.0):
                raise ValueError("rem-I01 lives on the unit ball")
            sigma = case.parameters["sigma"]
            if not sigma > 0:
                raise ValueError(f"rem-I01 needs sigma > 0, got {sigma}")
            regions = [(0.0, 0.5, -1.0), (0.5, 1.0, sigma)]
            vals = piecewise_constant(grid, regions)
            return Weight(grid, vals, {"case": "rem-I01", **case.parameters}, _piecewise_function(regions))
        fn, domain = _corpus_function(case)
        vals = np.asarray(fn(_sample_points(grid, domain)), dtype=float)
        definition = {"case": case.name, **case.parameters}
        if "K" in domain:
            definition["K"] = domain["K"]
        shift = 0.0 if grid.kind == "interval" else domain["x0"] + (domain["x1"] - domain["x0"]) / 2
        return Weight(grid, vals, definition, lambda x: fn(np.asarray(x, dtype=float) + shift))
    kind = case.get("type")
    if kind == "piecewise":
        regions = case["regions"]
        return Weight(grid, piecewise_constant(grid, regions), dict(case), _piecewise_function(regions))
    if kind == "sampled":
        return Weight(grid, grid.check(case["values"], "weight").copy(), {"type": "sampled"})
    if kind == "delta":
        b1, b2 = grid.check(case["b1"]), grid.check(case["b2"])
        if b1.min() < 0 or b2.min() < 0:
            raise ValueError("delta family needs b1, b2 >= 0")
        return Weight(grid, b1 - case["delta"] * b2, {"type": "delta", "delta": case["delta"]})
    raise ValueError(f"unrecognised weight definition {case!r}")


def half_domain(case: CorpusCase, nodes: int) -> Weight:
    """Even interval weight reduced to [center, endpoint] as a 1D ball."""
    _, domain = _corpus_function(case)
    R = (domain["x1"] - domain["x0"]) / 2
    return make_weight(build_grid(GridSpec.ball(R, 1, nodes)), case)


# -- hypothesis and condition checks ------------------------------------------


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as inclusive index pairs."""
    idx = np.flatnonzero(np.diff(np.concatenate(([0], mask.astype(np.int8), [0]))))
    return [(int(s), int(e) - 1) for s, e in zip(idx[::2], idx[1::2])]


def check_hypotheses(w: Weight) -> HypothesisReport:
    a = w.values
    tol = SIGN_TOL * np.abs(a).max() if a.size else 0.0
    total = integrate(w.grid, a)
    changes = bool((a > tol).any() and (a < -tol).any())
    comps = _runs(a > tol)
    return HypothesisReport(
        integral=total,
        changes_sign=changes,
        H0=changes and total < 0,
        positive_components=comps,
        H1=len(comps) > 0,
        H1prime=len(comps) == 1,
    )


def radial_split(grid: Grid, R0: float, side: str = "inner"):
    """Radial coordinate and the inner/outer parts of each cell measure.

    For balls the inner piece is B_{R0}. For intervals ``R0`` is the split
    point μ and ``side`` ('left' or 'right') picks which piece plays the
    ball; its endpoint acts as the centre.
    """
    if grid.kind == "ball":
        R = grid.spec.R
        r = grid.coordinates
        rho0 = R0
        order = slice(None)
    else:
        x0, x1 = grid.spec.x0, grid.spec.x1
        if side not in ("left", "right"):
            raise ValueError("interval splits need side='left' or 'right'")
        if side == "left":
            r, rho0, R, order = grid.coordinates - x0, R0 - x0, x1 - x0, slice(None)
        else:
            r, rho0, R, order = x1 - grid.coordinates, x1 - R0, x1 - x0, slice(None, None, -1)
    if not 0 < rho0 < R:
        raise ValueError(f"R0 must lie strictly inside (0, {R}), got {rho0}")
    h = grid.h
    lo = np.clip(r - h / 2, 0.0, R)
    hi = np.clip(r + h / 2, 0.0, R)
    if grid.kind == "ball":
        inner = _region_measure(grid, lo, np.minimum(hi, rho0))
        outer = _region_measure(grid, np.maximum(lo, rho0), hi)
    else:
        inner = np.maximum(np.minimum(hi, rho0) - lo, 0.0)
        outer = np.maximum(hi - np.maximum(lo, rho0), 0.0)
        # cells are half-width at the two ends of the interval
        scale = grid.measures / (inner + outer)
        inner, outer = inner * scale, outer * scale
    return r, rho0, R, inner, outer, order


def _exact_pieces(w: Weight, rho0: float, R: float, side: str):
    """∫_B a⁺, ∫_A a±, ∫_A a and sup_B a⁻ from the closed form of ``w``."""
    grid = w.grid
    fn = w.pointwise
    if grid.kind == "ball":
        to_x, dens = (lambda r: r), (lambda r: grid.omega * r ** (grid.N - 1))
    elif side == "left":
        to_x, dens = (lambda r: grid.spec.x0 + r), (lambda r: 1.0)
    else:
        to_x, dens = (lambda r: grid.spec.x1 - r), (lambda r: 1.0)

    def integral(g, lo, hi):
        # breakpoints at every grid node keep quad honest for piecewise weights
        pts = np.linspace(lo, hi, 65)
        return sum(quad(lambda r: g(float(fn(to_x(r)))) * dens(r), s0, s1, limit=200)[0] for s0, s1 in zip(pts[:-1], pts[1:]))

    pos = lambda v: max(v, 0.0)
    neg = lambda v: max(-v, 0.0)
    rr = np.linspace(0.0, rho0, 4097)[:-1]
    return {
        "plus_B": integral(pos, 0.0, rho0),
        "minus_A": integral(neg, rho0, R),
        "plus_A": integral(pos, rho0, R),
        "a_A": integral(lambda v: v, rho0, R),
        "a_B": integral(lambda v: v, 0.0, rho0),
        "abs": integral(abs, 0.0, rho0) + integral(abs, rho0, R),
        "sup_minus_B": float(np.max(np.maximum(-fn(to_x(rr)), 0.0))),
    }


def check_radial_conditions(w: Weight, q: float, R0: float, side: str = "inner") -> ConditionReport:
    """Evaluate the radial sufficient conditions for a split at ``R0``.

    Integrals over the inner piece B and the outer annulus A come from the
    closed form of the weight when one is known, and from the split cell
    measures otherwise.
    """
    grid = w.grid
    a = w.values
    r, rho0, R, inner, outer, order = radial_split(grid, R0, side)
    N = grid.N
    omega = grid.omega
    amax = np.abs(a).max()
    gate = 1e-10 * amax
    in_B = inner > 0
    in_A = outer > 0
    plus, minus = np.maximum(a, 0), np.maximum(-a, 0)
    if w.pointwise is not None:
        pieces = _exact_pieces(w, rho0, R, side)
    else:
        pieces = {
            "plus_B": float(np.dot(plus, inner)),
            "minus_A": float(np.dot(minus, outer)),
            "plus_A": float(np.dot(plus, outer)),
            "a_A": float(np.dot(a, outer)),
            "a_B": float(np.dot(a, inner)),
            "abs": integrate(grid, np.abs(a)),
            "sup_minus_B": float(minus[in_B].max()) if in_B.any() else 0.0,
        }
    cq = -(pieces["a_B"] + pieces["a_A"]) / pieces["abs"]
    inferno_lhs = (1 - q) / (1 + q) * pieces["minus_A"]
    inferno_rhs = pieces["plus_B"]
    # strictly inside each piece for the sign gates
    strict_B = in_B & ~in_A
    strict_A = in_A & ~in_B
    cc_signs = bool((a[strict_B] >= -gate).all() and (a[strict_A] <= gate).all())
    ra = a[order]
    rr = r[order]
    outer_idx = np.flatnonzero(rr >= rho0 - 1e-12 * R)
    slopes = np.diff(ra[outer_idx]) / grid.h
    monotone = bool(slopes.size == 0 or slopes.max() <= 1e-8 * max(1.0, amax))
    aminus_B = pieces["sup_minus_B"]
    ball_factor = omega * rho0**N
    sipi_lhs = (1 - q) / (2 * q + N * (1 - q)) * ball_factor * aminus_B
    sipi_rhs = pieces["plus_A"]
    rad2_signs = bool((a[strict_A] >= -gate).all())
    int_A = pieces["a_A"]
    K = int_A / (ball_factor * aminus_B) if aminus_B > 0 else math.inf
    KN = K * N
    interval = ((1 - KN) / (1 - KN + 2 * K), 1.0) if KN < 1 else None
    return ConditionReport(
        R0=R0,
        cq_threshold=cq,
        inferno_lhs=float(inferno_lhs),
        inferno_rhs=float(inferno_rhs),
        inferno_holds=bool(inferno_lhs <= inferno_rhs),
        cc_signs_ok=cc_signs,
        monotone_outer_ok=monotone,
        sipi_lhs=float(sipi_lhs),
        sipi_rhs=sipi_rhs,
        sipi_holds=bool(sipi_lhs < sipi_rhs),
        rad2_signs_ok=rad2_signs,
        K=K,
        KN_interval=interval,
        aminus_sup_inner=float(aminus_B),
        outer_integral=float(int_A),
    )


# -- exact solutions ----------------------------------------------------------


@dataclass
class ExactSolution:
    weight: Weight
    q: float
    fields: dict[str, np.ndarray]


def corpus_exact(case: CorpusCase, grid: Grid) -> ExactSolution:
    """Weight plus closed-form solution fields.

    remark-q0 yields ``u`` = sin^r x / r. The gluing cases yield the
    dead-core pair ``u1``, ``u2`` (u2(x) = u1(-x)) and ``sub`` = max(u1, u2).
    """
    if not case.analytic_solution_available:
        raise ValueError(f"corpus case {case.name!r} has no closed-form solution")
    w = make_weight(grid, case)
    q = case.parameters["q"]
    r = _exponent(q)
    if case.name == "remark-q0":
        x = _sample_points(grid, {"x0": 0.0, "x1": math.pi})
        return ExactSolution(w, q, {"u": np.sin(x) ** r / r})
    if grid.kind != "interval":
        raise ValueError(f"{case.name} solutions need the full interval grid")
    if case.name == "ti-cubic":
        coeffs = cubic_coefficients(q)
    else:
        coeffs = quartic_coefficients(q, w.definition["K"])
    u1 = _glue_solution(q, coeffs)
    x = grid.coordinates
    f1, f2 = u1(x), u1(-x)
    return ExactSolution(w, q, {"u1": f1, "u2": f2, "sub": np.maximum(f1, f2)})


def glue_polynomial(case: CorpusCase) -> np.polynomial.Polynomial:
    """The gluing polynomial p (on [1, 2]) of a ti-cubic / ti-quartic case."""
    q = case.parameters["q"]
    if case.name == "ti-cubic":
        coeffs = cubic_coefficients(q)
    elif case.name == "ti-quartic":
        coeffs = quartic_coefficients(q, case.parameters.get("K") or select_quartic_K(q))
    else:
        raise ValueError(f"{case.name!r} has no gluing polynomial")
    return np.polynomial.Polynomial(coeffs[::-1])


def closed_form(case: CorpusCase) -> Callable:
    """The weight of an interval corpus case as a function of x."""
    return _corpus_function(case)[0]
