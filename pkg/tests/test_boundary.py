import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxstop.boundary import (
    CSV_COLUMNS,
    Controls,
    TerminalClass,
    curve_family,
    default_asymptotes,
    h_rhs,
    integrate_from,
    limit_slope,
    ode_residual,
    q_rhs,
    solve_with_asymptote,
)
from maxstop.core import F, build_params, g_curve, zeta
from maxstop.errors import DomainError, ExtrapolationError, SingularityError

# H°(s) from an s-variable DOP853 integration of the boundary ODE (scripts/oracles.py)
ORACLE_H_OPT = {
    0.01: 0.002444689618288154,
    0.1: 0.0236676986316461,
    0.5: 0.10059934792755527,
    1.0: 0.1633708951093884,
    2.0: 0.22441571714913788,
    5.0: 0.2579370472559394,
    10.0: 0.2596757857637293,
}

REF = build_params(0.05, math.sqrt(0.2), 0.25)
S_DENSE = np.geomspace(1e-5, 35.0, 2000)


def _fdot(s):
    return math.exp(-s)


# ---------------------------------------------------------------- right-hand sides


@pytest.mark.parametrize("s", [0.01, 0.3, 1.0, 4.0, 15.0])
def test_qcal_vanishes_on_zeta(s):
    assert q_rhs(s, zeta(s, REF), REF) == pytest.approx(0.0, abs=1e-9)


def test_qcal_blows_up_at_g_inf():
    vals = [q_rhs(2.0, REF.g_inf - d, REF) for d in (1e-3, 1e-6, 1e-9)]
    assert vals[0] < vals[1] < vals[2]
    assert vals[2] > 1e6
    with pytest.raises(SingularityError):
        q_rhs(2.0, REF.g_inf + 1e-14, REF)


@pytest.mark.parametrize("q", [0.05, 0.2, REF.h_circ_inf, 0.33])
def test_qcal_large_s_limit(q):
    # the correction decays like (gamma(s) q)^(n-m), gamma(s) ~ 1/s
    assert q_rhs(1e4, q, REF) == pytest.approx(limit_slope(q, REF), rel=1e-9, abs=1e-11)


def test_h_rhs_chain_rule():
    s = 1.0
    h = 0.5 * g_curve(s, REF)
    q = h / F(s)
    want = _fdot(s) * q * (1.0 + q_rhs(s, q, REF))
    assert h_rhs(s, h, REF) == pytest.approx(want, rel=1e-9)


@pytest.mark.parametrize("s", [0.05, 1.0, 6.0])
def test_h_rhs_on_zeta_curve(s):
    z = zeta(s, REF)
    assert h_rhs(s, F(s) * z, REF) == pytest.approx(_fdot(s) * z, rel=1e-9)


@given(st.floats(1e-3, 30.0), st.floats(1e-3, 0.999))
def test_h_rhs_positive_below_g(s, frac):
    h = frac * g_curve(s, REF)
    assert h_rhs(s, h, REF) > 0.0


def test_h_rhs_poles():
    with pytest.raises(SingularityError):
        h_rhs(1.0, float(g_curve(1.0, REF)), REF)
    with pytest.raises(DomainError):
        h_rhs(1.0, 1.0, REF)


# ---------------------------------------------------------------- paths


def test_start_above_g_inf():
    s0, q0 = 1.0, 0.6
    assert REF.g_inf < q0 < 1.0 / (F(s0) / s0)
    back = integrate_from(s0, q0, "backward", REF)
    assert back.terminal_class is TerminalClass.HITS_UPPER_WALL or (
        back.s_lower <= 1.0001e-6 and REF.g_inf < back.q[0] < 1.0
    )
    fwd = integrate_from(s0, q0, "forward", REF)
    assert np.all(np.diff(fwd.q) < 0.0)
    assert np.all(fwd.q > REF.g_inf)


def test_start_below_zeta_runs_forever():
    s0 = 2.0
    q0 = 0.5 * zeta(s0, REF)
    fwd = integrate_from(s0, q0, "forward", REF)
    assert fwd.upper_is_infinite
    assert fwd.terminal_class is TerminalClass.CONVERGES_FINITE
    # strictly decreasing until the increments drop below round-off
    assert np.all(np.diff(fwd.q[fwd.s < 20.0]) < 0.0)
    assert np.all(np.diff(fwd.q) <= 0.0)
    assert fwd.q[-1] > 0.0


def test_bad_start():
    with pytest.raises(DomainError):
        integrate_from(1.0, 2.0, "forward", REF)
    with pytest.raises(ValueError):
        integrate_from(1.0, 0.1, "sideways", REF)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.02, 0.38), st.floats(1e-4, 0.05))
def test_paths_do_not_cross(s0, q_lo, gap):
    q_hi = min(q_lo + gap, 0.399)
    ctl = Controls(s_min=1e-3, s_max=30.0)
    a = integrate_from(s0, q_lo, "backward", REF, ctl)
    b = integrate_from(s0, q_hi, "backward", REF, ctl)
    lo = max(a.s_lower, b.s_lower)
    s = np.geomspace(lo, s0, 50)
    assert np.all(a.q_at(s[:-1]) < b.q_at(s[:-1]))


# ---------------------------------------------------------------- asymptote shooting


def test_optimal_boundary_matches_oracle(curves):
    c = curves["opt"]
    assert c.is_optimal and not c.is_separatrix
    for s, h in ORACLE_H_OPT.items():
        assert float(c.h(s)) == pytest.approx(h, rel=1e-10)


def test_optimal_boundary_shape(curves):
    c = curves["opt"]
    h = c.h(S_DENSE)
    assert np.all(h > 0.0)
    assert np.all(h < g_curve(S_DENSE, REF))
    assert np.all(np.diff(h) > 0.0)
    assert c.asymptote_error < 1e-8
    assert float(c.h(200.0)) == pytest.approx(REF.h_circ_inf, rel=1e-12)


def test_ode_residual_optimal(curves):
    c = curves["opt"]
    s = np.geomspace(c.s_min * 1.01, c.s_anchor * 0.99, 500)
    assert np.max(np.abs(ode_residual(c, s))) < 1e-6
    with pytest.raises(ExtrapolationError):
        ode_residual(c, [c.s_anchor * 2.0])


def test_separatrix_stays_below_g_inf(curves):
    c = curves["sep"]
    assert c.is_separatrix and c.separatrix_delta == Controls().separatrix_delta
    assert c.asymptote_error is None
    q = c.q(S_DENSE)
    assert np.all(q < REF.g_inf)
    assert np.all(np.diff(q) > 0.0)


def test_four_curves_ordered():
    levels = [0.5 * REF.h_circ_inf, REF.h_circ_inf, 0.5 * (REF.h_circ_inf + REF.g_inf), REF.g_inf]
    qs = np.array([solve_with_asymptote(q, REF).q(S_DENSE[S_DENSE > 1e-3]) for q in levels])
    assert np.all(np.diff(qs, axis=0) > 0.0)


@pytest.mark.parametrize("q_inf", [0.0, -0.1, 0.41, 1.0])
def test_asymptote_out_of_range(q_inf):
    with pytest.raises(DomainError):
        solve_with_asymptote(q_inf, REF)


def test_all_curves_start_at_q_dagger(curves):
    for key in ("opt", 0.13, 0.35, "sep"):
        assert float(curves[key].q(1e-6)) == pytest.approx(REF.q_dagger, rel=1e-5)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.02, 0.395))
def test_any_asymptote_gives_admissible_boundary(q_inf):
    c = solve_with_asymptote(q_inf, REF)
    s = np.geomspace(1e-3, 30.0, 300)
    h = c.h(s)
    assert np.all(np.diff(h) > 0.0)
    assert np.all(h < g_curve(s, REF))
    assert float(c.q(1e4)) == pytest.approx(q_inf, rel=1e-9)


# ---------------------------------------------------------------- families


def test_default_family_non_crossing():
    fam = curve_family(default_asymptotes(REF), REF)
    assert len(fam.members) == 7 and all(mb.ok for mb in fam.members)
    assert sum(c.is_optimal for c in fam.curves) == 1
    s = np.geomspace(1e-3, 30.0, 400)
    qs = np.array([c.q(s) for c in fam.curves])
    assert np.all(np.diff(qs, axis=0) > 0.0)
    assert set(fam.rows[0]) == set(CSV_COLUMNS)


def test_family_edge_cases():
    assert curve_family([], REF).members == [] and curve_family([], REF).rows == []
    fam = curve_family([REF.h_circ_inf, 0.5], REF)
    assert fam.members[0].ok and fam.members[0].curve.is_optimal
    assert not fam.members[1].ok and "DomainError" in fam.members[1].error
    up = curve_family([], REF, upper_starts=[(0.5, 0.6)])
    assert len(up.members) == 1
    path = up.members[0].path
    assert np.all(np.diff(path.q) < 0.0)
