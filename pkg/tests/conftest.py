import math

import pytest
from hypothesis import strategies as st

from maxstop.boundary import solve_with_asymptote
from maxstop.core import build_params


@pytest.fixture(scope="session")
def ref():
    return build_params(0.05, math.sqrt(0.2), 0.25)


@pytest.fixture(scope="session")
def curves(ref):
    """Solved boundaries keyed by asymptote; 'opt' is H°."""
    out = {"opt": solve_with_asymptote(ref.h_circ_inf, ref)}
    for q in (0.13, 0.2, 0.30, 0.35):
        out[q] = solve_with_asymptote(q, ref)
    out["sep"] = solve_with_asymptote(ref.g_inf, ref)
    return out


@st.composite
def valid_params(draw):
    """(mu, sigma, r) with mu <= sigma^2 < r + mu, away from both edges."""
    r = draw(st.floats(0.01, 1.0))
    mu = draw(st.floats(-0.95 * r, 0.5))
    lo, hi = max(mu, 0.0), r + mu
    s2 = lo + draw(st.floats(0.02, 0.98)) * (hi - lo)
    return mu, math.sqrt(s2), r


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
