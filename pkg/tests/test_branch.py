import math

import numpy as np
import pytest
from conftest import remark
from scipy.integrate import quad

from sublinear_lab.branch import (
    Q_START,
    asymptotic_gaps,
    asymptotic_state,
    compute_tstar,
    estimate_interval_I,
    ls_identities,
    multistart_evidence,
    multistart_uniqueness,
    near_zero_analysis,
    random_localized_fields,
    random_positive_fields,
    refine_at,
    rescaling_gap,
    trace_branch,
)
from sublinear_lab.eigen import EigenPair, principal_indefinite_eigen
from sublinear_lab.errors import HypothesisError
from sublinear_lab.grid import GridSpec, build_grid, integrate
from sublinear_lab.solve import large_supersolution
from sublinear_lab.weights import make_weight

STOPS = (0.99, 0.97, 0.95, 0.9, 0.75)


@pytest.fixture(scope="module")
def setup():
    g, w = remark(1025)
    pair = principal_indefinite_eigen(g, w)
    wn = w.scaled(pair.eigenvalue)
    return g, w, wn, pair


@pytest.fixture(scope="module")
def branch(setup):
    g, w, _, _ = setup
    return trace_branch(g, w, q_min=0.3, q_stops=STOPS)


@pytest.fixture(scope="module")
def normalized_branch(setup):
    g, _, wn, _ = setup
    return trace_branch(g, wn, q_min=0.75, q_stops=STOPS)


def test_tstar_identity(setup):
    g, w, _, pair = setup
    t = compute_tstar(g, w, pair)
    phi, a = pair.eigenfunction, w.values
    ident = math.log(t) * integrate(g, a * phi**2) + integrate(g, a * phi**2 * np.log(phi))
    assert abs(ident) <= 1e-12


def test_tstar_is_one_when_log_moment_vanishes():
    # with φ ≡ 1 the log moment is zero
    g = build_grid(GridSpec.interval(0.0, 1.0, 64))
    w = make_weight(g, {"type": "sampled", "values": np.ones(g.n)})
    pair = EigenPair(1.0, np.ones(g.n), 0.0, 1.0)
    assert compute_tstar(g, w, pair) == 1.0


def test_tstar_rejects_nonprincipal(setup):
    g, w, _, pair = setup
    bad = EigenPair(pair.eigenvalue, pair.eigenfunction, 0.0, 1.0)
    with pytest.raises(Exception, match="∫aφ₁²"):
        compute_tstar(g, w.scaled(-1.0), bad)


def test_tstar_converges_under_refinement():
    vals = []
    for n in (2048, 4096):
        g, w = remark(n)
        vals.append(compute_tstar(g, w, principal_indefinite_eigen(g, w)))
    assert abs(vals[0] - vals[1]) <= 1e-6


def test_asymptotic_state_limits(setup):
    _, _, _, pair = setup
    t = 0.7
    one = EigenPair(1.0, pair.eigenfunction, 0.0, 1.0)
    for q in (0.5, 0.9, 0.99):
        assert np.array_equal(asymptotic_state(None, one, t, q), t * pair.eigenfunction)
    big = EigenPair(2.0, pair.eigenfunction, 0.0, 1.0)
    small = EigenPair(0.5, pair.eigenfunction, 0.0, 1.0)
    maxes = [asymptotic_state(None, big, t, q).max() for q in (0.9, 0.99, 0.999)]
    mins = [asymptotic_state(None, small, t, q).min() for q in (0.9, 0.99, 0.999)]
    assert maxes[0] > maxes[1] > maxes[2] and maxes[2] < 1e-100
    assert mins[0] < mins[1] < mins[2] and mins[2] > 1e100
    with pytest.raises(ValueError):
        asymptotic_state(None, one, t, 1.0)


def test_branch_reaches_075(branch):
    assert branch.points[0].q == pytest.approx(Q_START)
    qs = branch.q_values
    assert np.all(np.diff(qs) < 0)
    at = branch.at(0.75)
    assert at.positivity.cls == "interiorOfCone"
    assert all(p.gamma1 > 0 for p in branch.points if p.q >= 0.75)
    assert all(p.residual <= 1e-8 for p in branch.points)


def test_branch_stops_where_positivity_is_lost(branch):
    # continuation below the cc threshold is attempted and the stop recorded
    assert branch.points[-1].q < 0.69638
    assert branch.termination_reason == "positivityLost"
    assert branch.frontier["q"] < branch.points[-1].q
    row = branch.points[-1].to_row()
    assert set(row) == {"q", "minU", "maxU", "gamma1", "positivityClass", "residual"}


def test_branch_stability_everywhere(branch):
    assert all(p.gamma1 > -1e-9 for p in branch.points if p.gamma1 is not None)


def test_normalized_gaps_decrease(setup):
    g, w, _, _ = setup
    gaps = asymptotic_gaps(g, w, (0.9, 0.95, 0.99))
    assert gaps[0] > gaps[1] > gaps[2]


def test_rescaling_equivalence(setup, normalized_branch):
    g, w, _, _ = setup
    raw = trace_branch(g, w, q_min=0.75, q_stops=STOPS)
    assert rescaling_gap(raw, normalized_branch) <= 1e-6


def test_probe_above_one(setup):
    g, _, wn, _ = setup
    assert refine_at(g, wn, 1 + 2**-7).gamma1 < 0


def test_ls_report(setup, normalized_branch):
    g, _, wn, _ = setup
    pair = principal_indefinite_eigen(g, wn)
    tstar = compute_tstar(g, wn, pair)
    rep = ls_identities(g, wn, pair, tstar, normalized_branch)
    assert rep.identity_ok and rep.phi_qt > 0
    assert rep.gamma_slope_predicted < 0
    assert 0.95 <= rep.slope_ratio <= 1.05
    wrong = ls_identities(g, wn, pair, 1 / tstar, normalized_branch)
    assert not wrong.identity_ok


def test_branch_uniqueness_multistart(setup, normalized_branch):
    g, _, wn, _ = setup
    for q in (0.95, 0.75):
        assert multistart_uniqueness(g, wn, normalized_branch.at(q)) <= 1e-6


def test_norm_bracket_stays_away_from_zero_and_infinity(setup, branch):
    g, w, _, _ = setup
    lo, hi = branch.norm_bracket()
    assert lo > 0
    assert max(p.max_u for p in branch.points if p.q <= 0.9) < large_supersolution(g, w, 0.9, floor=1.0).max()


def test_interval_estimate_remark(setup, branch):
    g, w, _, _ = setup
    est = estimate_interval_I(branch, g, w, test_qs=(0.5,))
    row = next(r for r in est.evidence if r.q == 0.5)
    assert row.interior_found == 0 and row.other_nontrivial > 0
    assert "positiveInterior" in row.classes
    assert est.qi_upper == branch.points[-1].q
    assert 0.5 <= est.qi_lower < est.qi_upper <= 0.71


def test_interval_estimate_bookkeeping(setup):
    g, w, _, _ = setup
    b = trace_branch(g, w, q_min=0.8, q_stops=(0.8,))
    assert b.termination_reason == "reachedQmin"
    est = estimate_interval_I(b, g, w)
    assert est.qi_upper == pytest.approx(0.8) and est.qi_lower is None


def test_cubic_in_I_but_not_A(cubic1025):
    g, ex = cubic1025
    row, found = multistart_evidence(g, ex.weight, 0.5, 20, 0, [ex.fields["sub"]])
    assert row.interior_found > 0
    assert "deadCore" in row.classes
    assert row.failed == 0


def test_random_fields(setup, rng):
    g, _, _, _ = setup
    for f in random_positive_fields(g, 10, rng):
        assert f.min() > 0
    for f in random_localized_fields(g, 10, rng):
        frac = np.count_nonzero(f) / g.n
        assert f.min() >= 0 and 0.15 <= frac <= 0.65


def test_near_zero_cosine():
    g = build_grid(GridSpec.interval(0.0, math.pi, 1025))
    w = make_weight(g, {"type": "sampled", "values": np.cos(g.coordinates)})
    rec = near_zero_analysis(g, w, 2.0, (1e-3, 1e-4))
    exact = quad(lambda x: math.cos(x) * math.log(2 + math.cos(x)), 0, math.pi, epsabs=1e-13)[0]
    assert exact == pytest.approx(math.pi * (2 - math.sqrt(3)), abs=1e-10)
    assert rec.S == pytest.approx(exact, abs=1e-5)
    assert rec.dirichlet_identity == pytest.approx(rec.S, rel=1e-3)
    assert rec.u0_margin == pytest.approx(1.0, abs=1e-5)
    target = 2 + math.sqrt(3)
    assert rec.predicted_slope == pytest.approx(target, rel=1e-5)
    errs = [abs(r["ratio"] / target - 1) for r in rec.rows]
    assert max(errs) <= 0.1 and errs[1] < errs[0]


def test_near_zero_guards():
    g = build_grid(GridSpec.interval(0.0, math.pi, 257))
    w = make_weight(g, {"type": "sampled", "values": np.cos(g.coordinates) - 1 / math.pi})
    with pytest.raises(HypothesisError, match="∫a"):
        near_zero_analysis(g, w, 2.0, (1e-3,))
    w = make_weight(g, {"type": "sampled", "values": np.cos(g.coordinates)})
    with pytest.raises(HypothesisError, match="t0"):
        near_zero_analysis(g, w, 0.5, (1e-3,))
