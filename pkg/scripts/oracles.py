"""Independent reference values for the test suite.

Everything here is recomputed without the package's solvers:
- characteristic roots and derived constants in 40-digit mpmath;
- the optimal boundary by integrating dH/ds directly in s with scipy's DOP853
  from H(40) = (m+1)/m, using a right-hand side written out separately;
- w(x, s) from that boundary via the smooth-fit linear system.

Run:  python scripts/oracles.py      (prints a dict of values to freeze)
"""

from __future__ import annotations

import math
from pprint import pprint

import mpmath as mp
from scipy.integrate import solve_ivp

mp.mp.dps = 40

MU, SIGMA2, R = mp.mpf("0.05"), mp.mpf("0.2"), mp.mpf("0.25")


def roots(mu, s2, r):
    a = s2 / 2
    b = mu - s2 / 2
    d = mp.sqrt(b * b + 4 * a * r)
    return (-b - d) / (2 * a), (-b + d) / (2 * a)


def constants():
    m, n = roots(MU, SIGMA2, R)
    g_inf = (m + 1) * (n + 1) / (m * n)
    h_inf = (m + 1) / m

    def theta(q):
        return q * (((n + 1) / n - q) / (h_inf - q)) ** (1 / (n - m))

    q_dag = mp.findroot(lambda q: theta(q) - 1, (mp.mpf("0.01"), h_inf - mp.mpf("1e-30")),
                        solver="anderson")
    return {"m": m, "n": n, "g_inf": g_inf, "h_inf": h_inf, "q_dagger": q_dag, "theta": theta}


def boundary_ode(c):
    m, n = float(c["m"]), float(c["n"])
    g_inf = float(c["g_inf"])
    k = n - m

    def rhs(s, y):
        h = y[0]
        f = -math.expm1(-s)
        ratio = (h / s) ** k
        num = math.exp(-s) * ((n + 1.0) * ratio - (m + 1.0)) * h
        den = -m * n * (g_inf * f - h) * (1.0 - ratio)
        return [num / den]

    return rhs


def optimal_boundary(s_eval):
    c = constants()
    s_eval = sorted(s_eval, reverse=True)
    sol = solve_ivp(boundary_ode(c), (40.0, min(s_eval)), [float(c["h_inf"])], method="DOP853",
                    t_eval=s_eval, rtol=1e-13, atol=1e-16)
    return dict(zip(sol.t, sol.y[0]))


def w_from_boundary(x, s, h, c):
    m, n = float(c["m"]), float(c["n"])
    f = -math.expm1(-s)
    if x <= h:
        return f / x - 1.0
    # A H^n + B H^m = F/H - 1,  n A H^n + m B H^m = -F/H
    rhs1, rhs2 = f / h - 1.0, -f / h
    a_s = (rhs2 - m * rhs1) / (n - m)
    b_s = (n * rhs1 - rhs2) / (n - m)
    return a_s * (x / h) ** n + b_s * (x / h) ** m


def main():
    c = constants()
    s_pts = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0]
    hb = optimal_boundary(s_pts)
    out = {k: float(v) for k, v in c.items() if k != "theta"}
    out["theta(0.2)"] = float(c["theta"](mp.mpf("0.2")))
    out["H_opt"] = {s: float(hb[s]) for s in s_pts}
    out["w(0.5,1)"] = w_from_boundary(0.5, 1.0, hb[1.0], c)
    out["w(0.8,2)"] = w_from_boundary(0.8, 2.0, hb[2.0], c)
    pprint(out)


if __name__ == "__main__":
    main()
