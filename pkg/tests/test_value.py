import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxstop.core import F, build_params, reward
from maxstop.errors import DomainError, ExtrapolationError
from maxstop.value import (
    GridSpec,
    ValueSurface,
    asymptotic_coefficients,
    coefficients,
    eval_w,
    eval_w_x,
    eval_w_xx,
    negativity_threshold,
    neumann_residual,
    second_derivative_limit,
    transversality_floor,
    value_table,
    vi_report,
)

REF = build_params(0.05, math.sqrt(0.2), 0.25)

# w from the s-variable oracle boundary and the smooth-fit system (scripts/oracles.py)
ORACLE_W = {(0.5, 1.0): 0.6488145630378713, (0.8, 2.0): 0.5148732916768197}


class _Scaled:
    """A boundary H multiplied by a constant, coefficients recomputed from it."""

    def __init__(self, curve, factor):
        self.curve, self.factor, self.params = curve, factor, curve.params

    def h(self, s):
        return self.factor * self.curve.h(s)


def test_asymptotic_coefficient_signs():
    a_lo, _ = asymptotic_coefficients(0.2, REF)
    a_opt, b_opt = asymptotic_coefficients(REF.h_circ_inf, REF)
    a_hi, _ = asymptotic_coefficients(0.35, REF)
    assert a_lo > 0.0 and a_hi < 0.0
    assert a_opt == pytest.approx(0.0, abs=1e-14)
    m, n, h = REF.m, REF.n, REF.h_circ_inf
    assert b_opt == pytest.approx((n + 1 - n * h) / ((n - m) * h ** (m + 1)), rel=1e-14)


@pytest.mark.parametrize("key", ["opt", 0.13, 0.35])
def test_smooth_fit_reconstruction(curves, key):
    c = curves[key]
    s = np.geomspace(1e-3, 30.0, 60)
    a, b = coefficients(s, c)
    h, f = c.h(s), F(s)
    n, m = REF.n, REF.m
    assert np.allclose(a * h**n + b * h**m, f / h - 1.0, rtol=1e-9, atol=1e-12)
    assert np.allclose(n * a * h**n + m * b * h**m, -f / h, rtol=1e-9, atol=1e-12)


def test_coefficients_outside_sampled_range(curves):
    with pytest.raises(ExtrapolationError):
        coefficients(1e-9, curves["opt"])


def test_w_matches_oracle(curves):
    for (x, s), want in ORACLE_W.items():
        assert eval_w(x, s, curves["opt"]) == pytest.approx(want, rel=1e-10)


def test_w_domain(curves):
    for x, s in ((0.0, 1.0), (-0.1, 1.0), (1.5, 1.0)):
        with pytest.raises(DomainError):
            eval_w(x, s, curves["opt"])


@pytest.mark.parametrize("s", [0.01, 0.5, 2.0, 10.0])
def test_smooth_fit_at_boundary(curves, s):
    c = curves["opt"]
    h = float(c.h(s))
    eps = 1e-7 * h
    scale = F(s) / h
    # one-sided values and slopes across x = H, after removing the common slope
    jump = eval_w(h + eps, s, c) - eval_w(h - eps, s, c) - 2.0 * eps * eval_w_x(h, s, c)
    assert abs(jump) < 1e-8 * scale
    assert abs(eval_w_x(h + eps, s, c) - eval_w_x(h - eps, s, c)) * h < 1e-6 * scale


@pytest.mark.parametrize("s", [0.1, 1.0, 5.0])
def test_second_derivative_jump(curves, s):
    c = curves["opt"]
    h = float(c.h(s))
    f = float(F(s))
    cont = eval_w_xx(h, s, c, side="wait")
    lim = second_derivative_limit(s, c)
    assert cont - 2.0 * f / h**3 == pytest.approx(lim, rel=1e-8)
    assert lim > 0.0


def test_w_deep_small_s(curves):
    v = eval_w(1e-3, 1e-3, curves["opt"])
    assert np.isfinite(v) and v > 0.0


@settings(max_examples=200, deadline=None)
@given(s=st.floats(1e-3, 30.0), frac=st.floats(1e-3, 1.0))
def test_w_dominates_reward_and_is_positive(curves, s, frac):
    x = frac * s
    w = eval_w(x, s, curves["opt"])
    assert w >= reward(x, s, REF) - 1e-10
    assert w > 0.0


@pytest.mark.parametrize("s", [0.5, 1.0, 2.0, 5.0])
def test_neumann_optimal(curves, s):
    assert neumann_residual(s, curves["opt"]) < 1e-6


def test_neumann_holds_for_every_member(curves):
    for key in (0.13, 0.2, 0.35, "sep"):
        for s in np.geomspace(0.01, 5.0, 20):
            assert neumann_residual(float(s), curves[key]) < 1e-6


def test_neumann_detects_perturbed_boundary(curves):
    bad = _Scaled(curves["opt"], 1.01)
    assert max(neumann_residual(float(s), bad) for s in np.geomspace(0.01, 5.0, 20)) > 1e-3


def test_vi_report_trichotomy(curves):
    grid = GridSpec(n_s=120, n_x=120)
    assert vi_report(curves["opt"], grid).all_ok
    assert vi_report(curves[0.13], grid).all_ok
    mid = 0.5 * (REF.h_circ_inf + REF.g_inf)
    from maxstop.boundary import solve_with_asymptote

    rep = vi_report(solve_with_asymptote(mid, REF), grid)
    # w < 0 = reward somewhere in the waiting region, so the obstacle check goes with it
    assert rep.stopping_ok and not rep.positivity_ok
    wt = rep.witness("positivity")
    assert wt.w < 0.0 and 0.0 < wt.x <= wt.s


def test_negativity_threshold(curves):
    assert negativity_threshold(2.0, curves["opt"]) is None
    c = curves[0.35]
    s = 20.0
    x0 = negativity_threshold(s, c)
    assert x0 is not None and x0 < s
    assert eval_w(x0, s, c) == pytest.approx(0.0, abs=1e-9)
    assert eval_w(x0 * 1.001, s, c) < 0.0


def test_value_surface_wrapper(curves):
    surf = ValueSurface.from_boundary(curves["opt"])
    assert eval_w(0.5, 1.0, surf) == eval_w(0.5, 1.0, curves["opt"])
    assert surf.a_inf == pytest.approx(0.0, abs=1e-14)
    a13 = ValueSurface.from_boundary(curves[0.13])
    assert transversality_floor(a13, 0.5) == pytest.approx(a13.a_inf * 0.5**REF.n)


def test_value_table_flags(curves):
    rows = value_table(curves["opt"], [1.0], n_x=20)
    h = float(curves["opt"].h(1.0))
    assert all((r["region_flag"] == "stop") == (r["x"] <= h) for r in rows)
