import math

import numpy as np
import pytest
from conftest import CUBIC, REM_I01, REMARK
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from sublinear_lab.grid import GridSpec, build_grid, integrate
from sublinear_lab.weights import (
    CorpusCase,
    check_hypotheses,
    check_radial_conditions,
    closed_form,
    corpus_exact,
    cubic_coefficients,
    glue_polynomial,
    half_domain,
    make_weight,
    quartic_coefficients,
    select_quartic_K,
)

CQ_REMARK = 2 * math.pi / (2 * (2 * math.sqrt(3) - 2 * math.pi / 3) + 2 * math.pi)


def test_remark_weight_at_half(remark1025):
    g, w = remark1025
    assert np.allclose(w.values, 2 - 8 * np.cos(g.coordinates) ** 2, atol=1e-14)


def test_cubic_coefficients_at_half():
    assert np.allclose(cubic_coefficients(0.5), (-20 / 3, 26, -24, 26 / 3), rtol=1e-14)
    p = glue_polynomial(CUBIC)
    # f(x) = (x+1)^4/4 near x = 1
    assert p(1) == pytest.approx(4) and p.deriv()(1) == pytest.approx(8)
    assert p.deriv(2)(1) == pytest.approx(12) and p.deriv()(2) == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("q", [1 / 3, 0.4, 0.6, 0.9])
def test_cubic_matches_f_to_second_order(q):
    r = 2 / (1 - q)
    p = glue_polynomial(CorpusCase("ti-cubic", {"q": q}))
    f = [2**r / r, 2 ** (r - 1), (r - 1) * 2 ** (r - 2)]
    assert [p(1), p.deriv()(1), p.deriv(2)(1)] == pytest.approx(f, rel=1e-12)
    assert p.deriv()(2) == pytest.approx(0, abs=1e-9 * f[0])


@pytest.mark.parametrize("q", [0.1, 0.25])
def test_quartic_matches_f_and_hits_K(q):
    r = 2 / (1 - q)
    K = select_quartic_K(q)
    p = np.polynomial.Polynomial(quartic_coefficients(q, K)[::-1])
    f = [2**r / r, 2 ** (r - 1), (r - 1) * 2 ** (r - 2)]
    assert [p(1), p.deriv()(1), p.deriv(2)(1)] == pytest.approx(f, rel=1e-10)
    assert p(2) == pytest.approx(K, rel=1e-10) and p.deriv()(2) == pytest.approx(0, abs=1e-8 * f[0])
    assert np.all(p(np.linspace(1, 2, 4001)) > 0)
    a = closed_form(CorpusCase("ti-quartic", {"q": q, "K": K}))
    s = np.linspace(-2, 2, 4001)
    assert a(s).min() < 0 < a(s).max()
    assert quad(lambda x: float(a(x)), -2, 2, points=[-1, 1], limit=200)[0] < 0


def test_quartic_hook_polynomial_identity():
    H = np.polynomial.Polynomial([2, -1]) * np.polynomial.Polynomial([-1, 1]) ** 2
    h = np.polynomial.Polynomial([-1, 1]) * np.polynomial.Polynomial([5, -3])
    assert np.allclose((H.deriv() - h).coef, 0, atol=1e-15)


def test_rem_i01_integral(i01_ball):
    g, w = i01_ball
    assert integrate(g, w.values) == pytest.approx(-0.1, abs=1e-12)


@pytest.mark.parametrize(
    "case",
    [
        CorpusCase("remark-q0", {"q": 1.0}),
        CorpusCase("ti-cubic", {"q": 0.2}),
        CorpusCase("ti-quartic", {"q": 0.5, "K": 1.0}),
        CorpusCase("ti-quartic", {"q": 0.2, "K": -1.0}),
        CorpusCase("nonesuch", {}),
    ],
)
def test_parameter_out_of_range(case):
    g = build_grid(GridSpec.interval(-2.0, 2.0, 64))
    with pytest.raises(ValueError):
        make_weight(g, case)


def test_case_grid_mismatch():
    with pytest.raises(ValueError):
        make_weight(build_grid(GridSpec.interval(0.0, 1.0, 64)), REMARK)
    with pytest.raises(ValueError):
        make_weight(build_grid(GridSpec.interval(0.0, 1.0, 64)), REM_I01)


def test_hypotheses_remark(remark1025):
    g, w = remark1025
    rep = check_hypotheses(w)
    assert rep.integral == pytest.approx(-2 * math.pi, abs=1e-5)
    assert rep.changes_sign and rep.H0 and rep.H1prime
    (s, e), = rep.positive_components
    x = g.coordinates
    assert x[s] == pytest.approx(math.pi / 3, abs=2 * g.h)
    assert x[e] == pytest.approx(2 * math.pi / 3, abs=2 * g.h)


def test_negative_constant_fails_h0():
    g = build_grid(GridSpec.interval(0.0, 1.0, 64))
    rep = check_hypotheses(make_weight(g, {"type": "sampled", "values": -np.ones(g.n)}))
    assert not rep.changes_sign and not rep.H0 and not rep.H1


def test_roundoff_is_not_a_sign_change():
    g = build_grid(GridSpec.interval(0.0, 1.0, 64))
    vals = -np.ones(g.n)
    vals[10] = 1e-14
    assert not check_hypotheses(make_weight(g, {"type": "sampled", "values": vals})).changes_sign


def test_hypotheses_cubic(cubic1025):
    g, ex = cubic1025
    rep = check_hypotheses(ex.weight)
    assert rep.H0 and not rep.H1prime
    x = g.coordinates
    comps = [(x[s], x[e]) for s, e in rep.positive_components]
    assert len(comps) == 2
    assert -2 <= comps[0][0] and comps[0][1] < -1 and 1 < comps[1][0] and comps[1][1] <= 2
    assert ex.weight.values[-1] == pytest.approx(28 / math.sqrt(34 / 3), rel=1e-12)


def test_remark_radial_conditions():
    w = half_domain(REMARK, 2049)
    lo = check_radial_conditions(w, 0.5, math.pi / 6)
    hi = check_radial_conditions(w, 0.75, math.pi / 6)
    assert lo.cq_threshold == pytest.approx(CQ_REMARK, abs=1e-8)
    assert CQ_REMARK == pytest.approx(0.69638, abs=1e-5)
    # the 1D ball of radius π/2 is the whole interval, so ∫a⁺ = 2√3 - 2π/3
    assert lo.inferno_rhs == pytest.approx(2 * math.sqrt(3) - 2 * math.pi / 3, abs=1e-8)
    assert not lo.inferno_holds and hi.inferno_holds
    assert lo.cc_signs_ok and lo.monotone_outer_ok


@pytest.mark.parametrize("q", np.linspace(0.05, 0.95, 10))
def test_inferno_monotone_in_q(q):
    w = half_domain(REMARK, 513)
    here = check_radial_conditions(w, q, math.pi / 6).inferno_holds
    if here:
        for q2 in np.linspace(q, 0.99, 5):
            assert check_radial_conditions(w, q2, math.pi / 6).inferno_holds


def test_rem_i01_conditions(i01_ball):
    _, w = i01_ball
    rep = check_radial_conditions(w, 0.5, 0.5)
    assert rep.K == pytest.approx(0.9, abs=1e-12)
    lo, hi = rep.KN_interval
    assert lo == pytest.approx(0.1 / 1.9, abs=1e-12) and hi == 1.0
    assert rep.sipi_lhs == pytest.approx(1 / 3, abs=1e-12)
    assert rep.sipi_rhs == pytest.approx(0.9, abs=1e-12)
    assert rep.sipi_holds and rep.rad2_signs_ok


def test_R0_outside_domain(i01_ball):
    _, w = i01_ball
    for R0 in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError, match="R0"):
            check_radial_conditions(w, 0.5, R0)


def test_cubic_exact_values(cubic1025):
    g, ex = cubic1025
    u1 = ex.fields["u1"]
    x = g.coordinates
    at = lambda p: u1[np.argmin(np.abs(x - p))]
    assert at(-1.5) == 0.0 and at(0.0) == pytest.approx(0.25, rel=1e-14)
    assert at(2.0) == pytest.approx(34 / 3, rel=1e-12)
    assert np.array_equal(ex.fields["u2"], u1[::-1])
    assert np.array_equal(ex.fields["sub"], np.maximum(u1, u1[::-1]))


def test_cubic_solution_is_c2_across_the_gluing_points():
    errs = []
    for n in (1025, 2049):
        g = build_grid(GridSpec.interval(-2.0, 2.0, n))
        u, h, x = corpus_exact(CUBIC, g).fields["u1"], g.h, g.coordinates
        gap = 0.0
        for p in (-1.0, 1.0):
            i = int(np.argmin(np.abs(x - p)))
            left = (u[i] - 2 * u[i - 1] + u[i - 2]) / h**2
            right = (u[i + 2] - 2 * u[i + 1] + u[i]) / h**2
            gap = max(gap, abs(left - right))
        errs.append(gap)
    assert errs[1] <= 0.6 * errs[0]
    # one-sided differences err by about h|u'''|, with f''' = 12 and |p'''| = 40 at x = 1
    assert errs[0] <= 2 * (12 + 40) * 4 / 1024


@pytest.mark.parametrize("q", [1 / 3, 0.5, 0.8])
def test_cubic_weight_is_continuous(q):
    a = closed_form(CorpusCase("ti-cubic", {"q": q}))
    top = np.abs(a(np.linspace(-2, 2, 4001))).max()
    for p in (-1.0, 1.0):
        assert abs(a(p - 1e-12) - a(p + 1e-12)) <= 1e-8 * top


def test_exact_solution_unavailable():
    with pytest.raises(ValueError):
        corpus_exact(REM_I01, build_grid(GridSpec.ball(1.0, 1, 64)))


@settings(max_examples=30, deadline=None)
@given(d1=st.floats(0.01, 50), d2=st.floats(0.01, 50))
def test_delta_family_integral_decreases(d1, d2):
    g = build_grid(GridSpec.interval(0.0, 1.0, 101))
    x = g.coordinates
    b1 = np.maximum(0.3 - x, 0)
    b2 = np.maximum(x - 0.5, 0)
    i1 = integrate(g, make_weight(g, {"type": "delta", "b1": b1, "b2": b2, "delta": d1}).values)
    i2 = integrate(g, make_weight(g, {"type": "delta", "b1": b1, "b2": b2, "delta": d2}).values)
    if d1 < d2:
        assert i1 > i2
