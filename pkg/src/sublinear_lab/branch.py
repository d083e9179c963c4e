"""The exponent q as a parameter: t*, the 𝒫° branch, the solvability interval, near-zero behaviour."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .eigen import EigenPair, linearized_eigen, principal_indefinite_eigen
from .errors import HypothesisError, SolverError, TrivialSolutionError
from .grid import Grid, integrate
from .solve import (
    PositivityClass,
    SolveParams,
    SubSuperPair,
    branch_extension_subsolution,
    classify_positivity,
    large_supersolution,
    minimize_energy,
    monotone_iterate,
    newton_refine,
    relative_residual,
    solve_linear_neumann,
)
from .weights import Weight

log = logging.getLogger(__name__)

Q_START = 1 - 2**-7
Q_START_LIMIT = 1 - 2**-12
MIN_STEP = 1e-4
NONTRIVIAL = 1e-8
BRANCH_PARAMS = SolveParams(max_iterations=200, tolerance=1e-10)


@dataclass
class BranchPoint:
    q: float
    u: np.ndarray = field(repr=False)
    min_u: float
    max_u: float
    gamma1: float | None
    positivity: PositivityClass
    residual: float

    def to_row(self) -> dict:
        return {
            "q": self.q,
            "minU": self.min_u,
            "maxU": self.max_u,
            "gamma1": self.gamma1,
            "positivityClass": self.positivity.cls,
            "residual": self.residual,
        }


@dataclass
class Branch:
    points: list[BranchPoint]
    mu1: float
    tstar: float
    termination_reason: str
    frontier: dict | None = None

    @property
    def q_values(self) -> np.ndarray:
        return np.array([p.q for p in self.points])

    def at(self, q: float) -> BranchPoint:
        for p in self.points:
            if math.isclose(p.q, q, rel_tol=0, abs_tol=1e-12):
                return p
        raise KeyError(f"no branch point at q = {q}")

    def norm_bracket(self) -> tuple[float, float]:
        """(min, max) of ‖u_q‖∞ over the branch."""
        sups = [p.max_u for p in self.points]
        return min(sups), max(sups)


@dataclass
class LSReport:
    tstar_identity: float
    identity_scale: float
    phi_qt: float
    gamma_slope_predicted: float
    gamma_slope_measured: float

    @property
    def identity_ok(self) -> bool:
        return abs(self.tstar_identity) <= 1e-9 * self.identity_scale + 1e-12

    @property
    def slope_ratio(self) -> float:
        return self.gamma_slope_measured / self.gamma_slope_predicted

    def to_json(self) -> dict:
        return {
            "tstarIdentity": self.tstar_identity,
            "phiQT": self.phi_qt,
            "gammaSlopePredicted": self.gamma_slope_predicted,
            "gammaSlopeMeasured": self.gamma_slope_measured,
        }


def compute_tstar(grid: Grid, w: Weight, pair: EigenPair) -> float:
    """t* = exp(-∫aφ₁² log φ₁ / ∫aφ₁²)."""
    phi = pair.eigenfunction
    if phi.min() <= 0:
        raise HypothesisError("t* needs a strictly positive eigenfunction")
    a = w.values
    denom = integrate(grid, a * phi**2)
    if not denom > 0:
        raise SolverError(f"∫aφ₁² = {denom:.3e} <= 0; the eigenpair is not principal")
    return math.exp(-integrate(grid, a * phi**2 * np.log(phi)) / denom)


def asymptotic_state(w: Weight, pair: EigenPair, tstar: float, q: float) -> np.ndarray:
    """μ₁^{-1/(1-q)} t* φ₁, the leading behaviour of u_q as q → 1⁻."""
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0,1), got {q}")
    return pair.eigenvalue ** (-1 / (1 - q)) * tstar * pair.eigenfunction


def _guess(pair: EigenPair, tstar: float, q: float) -> np.ndarray:
    # the same scaling serves both sides of q = 1
    return pair.eigenvalue ** (-1 / (1 - q)) * tstar * pair.eigenfunction


def _point(grid: Grid, w: Weight, q: float, u: np.ndarray) -> BranchPoint:
    pos = classify_positivity(u, grid=grid)
    gamma = linearized_eigen(grid, w, q, u).gamma1 if u.min() > 0 else None
    return BranchPoint(q, u, float(u.min()), float(u.max()), gamma, pos, relative_residual(grid, w.values, q, u))


def trace_branch(
    grid: Grid,
    w: Weight,
    q_start: float = Q_START,
    q_min: float = 0.5,
    step: float = 2**-5,
    min_step: float = MIN_STEP,
    params: SolveParams = BRANCH_PARAMS,
    q_stops=(),
) -> Branch:
    """Continue the 𝒫° branch from q_start down to q_min with a secant predictor in q.

    Failed or non-𝒫° corrections halve the step down to ``min_step``. Values in
    ``q_stops`` are always landed on exactly.
    """
    pair = principal_indefinite_eigen(grid, w)
    tstar = compute_tstar(grid, w, pair)
    stops = sorted((s for s in q_stops if q_min <= s < q_start), reverse=True)
    q0, history = q_start, []
    while True:
        try:
            u = newton_refine(grid, w, q0, _guess(pair, tstar, q0), params)
            break
        except (SolverError, HypothesisError) as exc:
            history.append(f"q={q0:.6g}: {exc}")
            q0 = (1 + q0) / 2
            if q0 > Q_START_LIMIT:
                raise SolverError("initial refinement failed: " + "; ".join(history)) from exc
    points = [_point(grid, w, q0, u)]
    if points[0].positivity.cls != "interiorOfCone":
        raise SolverError(f"initial branch point at q={q0} is {points[0].positivity.cls}")
    h, reason, frontier = step, "reachedQmin", None

    def scale(q):
        return pair.eigenvalue ** (1 / (1 - q))

    while points[-1].q > q_min:
        cur = points[-1]
        target = max(cur.q - h, q_min)
        nxt = [s for s in stops if s < cur.q - 1e-12]
        if nxt and target < nxt[0]:
            target = nxt[0]
        # the secant runs on v = μ₁^{1/(1-q)} u, which stays O(1) while u itself
        # changes scale by powers of μ₁
        vcur = scale(cur.q) * cur.u
        vpred = vcur
        if len(points) > 1:
            prev = points[-2]
            vprev = scale(prev.q) * prev.u
            vpred = np.maximum(vcur + (target - cur.q) * (vcur - vprev) / (cur.q - prev.q), 0.5 * vcur)
        guess = vpred / scale(target)
        failure = None
        try:
            u = newton_refine(grid, w, target, guess, params)
            pt = _point(grid, w, target, u)
            if pt.positivity.cls != "interiorOfCone":
                failure = ("positivityLost", pt.positivity.cls)
        except (SolverError, HypothesisError) as exc:
            failure = ("newtonFailed", str(exc))
        if failure is None:
            points.append(pt)
            h = min(step, 1.5 * h)
            continue
        frontier = {"q": target, "reason": failure[0], "detail": failure[1]}
        if h / 2 < min_step:
            reason = failure[0]
            break
        h /= 2
    log.info("branch %s at q=%.6g after %d points", reason, points[-1].q, len(points))
    return Branch(points, pair.eigenvalue, tstar, reason, frontier if reason != "reachedQmin" else None)


def refine_at(grid: Grid, w: Weight, q: float, params: SolveParams = BRANCH_PARAMS) -> BranchPoint:
    """One solve at a fixed q from the asymptotic guess (either side of q = 1)."""
    pair = principal_indefinite_eigen(grid, w)
    tstar = compute_tstar(grid, w, pair)
    u = newton_refine(grid, w, q, _guess(pair, tstar, q), params)
    return _point(grid, w, q, u)


def asymptotic_gaps(grid: Grid, w: Weight, qs) -> list[float]:
    """‖μ₁^{1/(1-q)} u_q - t*φ₁‖∞ for each q, solving by Newton from the asymptotic guess."""
    pair = principal_indefinite_eigen(grid, w)
    tstar = compute_tstar(grid, w, pair)
    out = []
    for q in qs:
        u = newton_refine(grid, w, q, asymptotic_state(w, pair, tstar, q), BRANCH_PARAMS)
        out.append(float(np.abs(pair.eigenvalue ** (1 / (1 - q)) * u - tstar * pair.eigenfunction).max()))
    return out


def random_positive_fields(grid: Grid, count: int, rng: np.random.Generator, modes: int = 6) -> list[np.ndarray]:
    """Smooth strictly positive fields exp(Σ c_k cos(kπ s)) with a log-uniform amplitude."""
    s = (grid.coordinates - grid.coordinates[0]) / (grid.coordinates[-1] - grid.coordinates[0])
    out = []
    for _ in range(count):
        c = rng.normal(scale=0.5, size=modes) / np.arange(1, modes + 1)
        shape = np.exp(sum(ck * np.cos((k + 1) * math.pi * s) for k, ck in enumerate(c)))
        out.append(10 ** rng.uniform(-2, 1) * shape)
    return out


def random_localized_fields(grid: Grid, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Random positive fields cut to a random window covering 20% to 60% of the domain.

    Starts concentrated on part of Ω reach solutions that vanish elsewhere,
    which globally positive starts miss.
    """
    x = grid.coordinates
    L = x[-1] - x[0]
    out = []
    for f in random_positive_fields(grid, count, rng):
        width = rng.uniform(0.2, 0.6) * L
        lo = x[0] + rng.uniform(0, L - width)
        out.append(np.where((x >= lo) & (x <= lo + width), f, 0.0))
    return out


@dataclass
class EvidenceRow:
    q: float
    interior_found: int
    other_nontrivial: int
    trivial: int
    failed: int
    classes: list[str]

    def to_json(self) -> dict:
        return {
            "q": self.q,
            "interiorFound": self.interior_found,
            "otherNontrivial": self.other_nontrivial,
            "trivial": self.trivial,
            "failed": self.failed,
            "classes": self.classes,
        }


def multistart_evidence(
    grid: Grid,
    w: Weight,
    q: float,
    n_starts: int = 20,
    seed: int = 0,
    subsolutions=(),
    params: SolveParams | None = None,
) -> tuple[EvidenceRow, list[np.ndarray]]:
    """Classify what randomized energy minimization and monotone iteration find at q.

    Half of the starts are globally positive, half are localized to a window.
    Every field in ``subsolutions`` is also iterated monotonically against a
    large supersolution.
    """
    rng = np.random.default_rng(seed)
    params = params or SolveParams(tolerance=1e-8)
    found, classes = [], []
    counts = {"interior": 0, "other": 0, "trivial": 0, "failed": 0}

    def record(u):
        if u.max() <= NONTRIVIAL:
            counts["trivial"] += 1
            classes.append("trivial")
            return
        cls = classify_positivity(u, grid=grid).cls
        classes.append(cls)
        counts["interior" if cls == "interiorOfCone" else "other"] += 1
        found.append(u)

    half = n_starts // 2
    inits = random_positive_fields(grid, n_starts - half, rng) + random_localized_fields(grid, half, rng)
    for init in inits:
        try:
            record(minimize_energy(grid, w, q, init, params))
        except TrivialSolutionError:
            counts["trivial"] += 1
            classes.append("trivial")
        except (SolverError, HypothesisError):
            counts["failed"] += 1
            classes.append("failed")
    for sub in subsolutions:
        try:
            sup = large_supersolution(grid, w, q, floor=1.01 * sub.max())
            record(monotone_iterate(grid, w, q, SubSuperPair(sub, sup), params))
        except (SolverError, HypothesisError, ValueError):
            counts["failed"] += 1
            classes.append("failed")
    row = EvidenceRow(q, counts["interior"], counts["other"], counts["trivial"], counts["failed"], classes)
    return row, found


@dataclass
class IntervalEstimate:
    qi_lower: float | None
    qi_upper: float
    evidence: list[EvidenceRow]

    def to_json(self) -> dict:
        return {"qiLower": self.qi_lower, "qiUpper": self.qi_upper, "evidence": [r.to_json() for r in self.evidence]}


def estimate_interval_I(branch: Branch, grid: Grid, w: Weight, test_qs=(), n_starts: int = 20, seed: int = 0) -> IntervalEstimate:
    """Bracket q_i between the lowest verified 𝒫° point and the largest q where every attempt fails.

    At each tested q the lowest branch point also seeds a branch-extension
    subsolution for monotone iteration.
    """
    if not branch.points:
        raise ValueError("branch is empty")
    low = branch.points[-1]
    qs = sorted(set(float(q) for q in test_qs) | ({branch.frontier["q"]} if branch.frontier else set()), reverse=True)
    upper, lower, rows = low.q, None, []
    for i, q in enumerate(qs):
        # the extension only runs upward in q, so it cannot seed q below the branch
        subs = [branch_extension_subsolution(low.u, low.q, q)] if low.q <= q < 1 else []
        row, _ = multistart_evidence(grid, w, q, n_starts, seed + i, subs)
        rows.append(row)
        if row.interior_found:
            upper = min(upper, q)
        elif lower is None or q > lower:
            lower = q
    if lower is not None and lower >= upper:
        lower = None
    return IntervalEstimate(lower, upper, rows)


def ls_identities(grid: Grid, w: Weight, pair: EigenPair, tstar: float, branch: Branch, qs=(0.97, 0.99)) -> LSReport:
    """The scalar identities of the reduction at (q, t) = (1, t*) and the measured γ₁ slope.

    ``w`` should be μ₁-normalized; γ₁ samples come from the branch at ``qs``.
    """
    a, phi = w.values, pair.eigenfunction
    logphi = np.log(phi)
    ident = integrate(grid, a * phi**2 * np.log(tstar * phi))
    scale = abs(integrate(grid, a * phi**2 * logphi))
    phi_qt = integrate(grid, a * phi**2)
    lo, hi = (branch.at(q) for q in sorted(qs))
    measured = (hi.gamma1 - lo.gamma1) / (hi.q - lo.q)
    return LSReport(ident, scale, phi_qt, -phi_qt / integrate(grid, phi**2), measured)


def rescaling_gap(branch_a: Branch, branch_b: Branch) -> float:
    """max over common q of ‖μ₁^{1/(1-q)} u_q(a) - v_q(μ₁a)‖∞ / ‖v_q‖∞."""
    worst = 0.0
    common = 0
    for p in branch_a.points:
        try:
            v = branch_b.at(p.q)
        except KeyError:
            continue
        common += 1
        scaled = branch_a.mu1 ** (1 / (1 - p.q)) * p.u
        worst = max(worst, float(np.abs(scaled - v.u).max() / np.abs(v.u).max()))
    if not common:
        raise ValueError("branches share no q values")
    return worst


def multistart_uniqueness(grid: Grid, w: Weight, point: BranchPoint, starts: int = 5, seed: int = 0) -> float:
    """Largest relative distance between Newton solutions from randomized positive starts and the branch point."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for shape in random_positive_fields(grid, starts, rng):
        # the random shapes carry their own amplitude; rescale around the branch size
        init = point.u * shape / np.exp(np.log(shape).mean())
        u = newton_refine(grid, w, point.q, init, BRANCH_PARAMS)
        worst = max(worst, float(np.abs(u - point.u).max() / point.max_u))
    return worst


@dataclass
class NearZeroRecord:
    t0: float
    u0_margin: float
    S: float
    dirichlet_identity: float
    predicted_slope: float
    rows: list[dict]

    def to_json(self) -> dict:
        return {
            "t0": self.t0,
            "u0Margin": self.u0_margin,
            "S": self.S,
            "dirichletIdentity": self.dirichlet_identity,
            "predictedSlope": self.predicted_slope,
            "rows": self.rows,
        }


def near_zero_analysis(grid: Grid, w: Weight, t0: float, epsilons, params: SolveParams | None = None) -> NearZeroRecord:
    """q(ε) for the weight a - ε with ∫a = 0, compared with the slope |Ω| / ∫a log u₀.

    q(ε) is the exponent at which the 𝒫° solution of a - ε has mean t0,
    the amplitude of u₀ = t0 + w₀.
    """
    a = w.values
    total = integrate(grid, a)
    if abs(total) > 1e-8 * integrate(grid, np.abs(a)):
        raise HypothesisError(f"near-zero analysis needs ∫a = 0 (∫a = {total:.6g})")
    w0 = solve_linear_neumann(grid, a)
    u0 = t0 + w0
    if u0.min() <= 0:
        raise HypothesisError(f"u₀ = t0 + w₀ is not positive (min {u0.min():.3e}); raise t0")
    S = integrate(grid, a * np.log(u0))
    # ∫|∇u₀|²/u₀ with face values of u₀ averaged
    harmonic = float(np.sum(grid.faces * np.diff(u0) ** 2 / grid.h * 2 / (u0[1:] + u0[:-1])))
    slope = grid.volume / S
    params = params or SolveParams(max_iterations=200, tolerance=1e-12)
    rows = []
    for eps in epsilons:
        we = Weight(grid, a - eps, {"type": "shifted", "epsilon": eps})
        cache = {}

        def mean_gap(q):
            u = newton_refine(grid, we, q, cache.get("u", u0), params)
            if classify_positivity(u, grid=grid).cls != "interiorOfCone":
                raise SolverError(f"solution at q={q} left the positive cone")
            cache["u"] = u
            return integrate(grid, u) / grid.volume - t0

        guess = eps * slope
        lo, hi = guess / 2, min(2 * guess, 0.2)
        flo, fhi = mean_gap(lo), mean_gap(hi)
        while flo * fhi > 0 and lo > 1e-12 and hi <= 0.2:
            lo, hi = lo / 2, min(hi * 2, 0.2)
            flo, fhi = mean_gap(lo), mean_gap(hi)
        if flo * fhi > 0:
            raise SolverError(f"could not bracket q(ε) for ε = {eps}")
        q_eps = brentq(mean_gap, lo, hi, xtol=1e-14 * guess, rtol=1e-10)
        rows.append({"epsilon": eps, "q": q_eps, "ratio": q_eps / eps})
    return NearZeroRecord(t0, float(u0.min()), S, harmonic, slope, rows)
