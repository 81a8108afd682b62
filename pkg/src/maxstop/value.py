"""Candidate value functions w built from a boundary curve, and their verification.

For a boundary H the candidate is

    w(x, s) = F(s)/x - 1                 for x <= H(s)
            = A(s) x^n + B(s) x^m        for H(s) < x <= s

with A, B fixed by value and slope matching at x = H(s). Internally the
waiting-region piece is evaluated as a (x/H)^n + b (x/H)^m with a = A H^n,
b = B H^m, both O(1); this avoids the overflow of x^m for tiny x.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .boundary import BoundaryCurve
from .core import F, ModelParams, generator_of_reward
from .errors import DomainError

VI_SLACK = 1e-10

# five-point centred first derivative
_D5_OFFSETS = (-2.0, -1.0, 1.0, 2.0)
_D5_WEIGHTS = (1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0)


def scaled_coefficients(h, f, params: ModelParams):
    """(A H^n, B H^m) from the smooth-fit system, given H and F at the same s."""
    nm = params.n_minus_m
    a = (params.m * h - (params.m + 1.0) * f) / (nm * h)
    b = ((params.n + 1.0) * f - params.n * h) / (nm * h)
    return a, b


def asymptotic_coefficients(h_inf: float, params: ModelParams) -> tuple[float, float]:
    m, n = params.m, params.n
    a_inf = (m * h_inf - (m + 1.0)) / ((n - m) * h_inf ** (n + 1.0))
    b_inf = (n + 1.0 - n * h_inf) / ((n - m) * h_inf ** (m + 1.0))
    return a_inf, b_inf


@dataclass(frozen=True)
class ValueSurface:
    boundary: BoundaryCurve
    a_samples: np.ndarray
    b_samples: np.ndarray
    a_inf: float
    b_inf: float
    params: ModelParams = field(repr=False)

    @classmethod
    def from_boundary(cls, boundary: BoundaryCurve) -> "ValueSurface":
        params = boundary.params
        s = boundary.q_path.s
        a, b = coefficients(s, boundary)
        a_inf, b_inf = asymptotic_coefficients(boundary.h_inf, params)
        return cls(boundary, a, b, a_inf, b_inf, params)

    @property
    def s_grid(self) -> np.ndarray:
        return self.boundary.q_path.s

    def h(self, s):
        return self.boundary.h(s)


def _boundary_of(obj) -> BoundaryCurve:
    return obj.boundary if isinstance(obj, ValueSurface) else obj


def coefficients(s, surface):
    """A(s), B(s). Accepts a ``ValueSurface`` or a bare ``BoundaryCurve``.

    H between boundary samples comes from the boundary's dense output; A and B
    are always recomputed from it in closed form.
    """
    bc = _boundary_of(surface)
    params = bc.params
    h = bc.h(s)
    a, b = scaled_coefficients(h, F(s), params)
    return a * h ** (-params.n), b * h ** (-params.m)


def _pieces(x, s, bc: BoundaryCurve):
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(x <= 0.0) or np.any(x > s * (1 + 1e-14)):
        raise DomainError("w is defined on 0 < x <= s")
    x, s = np.broadcast_arrays(x, s)
    f = F(s)
    h = bc.h(s)
    a, b = scaled_coefficients(h, f, bc.params)
    return x, s, f, h, a, b


def eval_w(x, s, surface):
    x, s, f, h, a, b = _pieces(x, s, _boundary_of(surface))
    params = _boundary_of(surface).params
    ln_r = np.log(x / h)
    cont = a * np.exp(params.n * ln_r) + b * np.exp(params.m * ln_r)
    out = np.where(x <= h, f / x - 1.0, cont)
    return float(out) if out.ndim == 0 else out


def eval_w_x(x, s, surface):
    x, s, f, h, a, b = _pieces(x, s, _boundary_of(surface))
    n, m = _boundary_of(surface).params.n, _boundary_of(surface).params.m
    ln_r = np.log(x / h)
    cont = (n * a * np.exp(n * ln_r) + m * b * np.exp(m * ln_r)) / x
    out = np.where(x <= h, -f / x**2, cont)
    return float(out) if out.ndim == 0 else out


def eval_w_xx(x, s, surface, side: str = "auto"):
    """Second x-derivative; ``side`` forces the 'stop' or 'wait' formula (used at x = H)."""
    x, s, f, h, a, b = _pieces(x, s, _boundary_of(surface))
    n, m = _boundary_of(surface).params.n, _boundary_of(surface).params.m
    ln_r = np.log(x / h)
    cont = (n * (n - 1.0) * a * np.exp(n * ln_r) + m * (m - 1.0) * b * np.exp(m * ln_r)) / x**2
    stop = 2.0 * f / x**3
    if side == "stop":
        out = stop
    elif side == "wait":
        out = cont
    else:
        out = np.where(x <= h, stop, cont)
    return float(out) if np.ndim(out) == 0 else out


def _ds(s: float) -> float:
    return 1e-2 * min(s, 1.0)


def coefficient_derivatives(s: float, surface) -> tuple[float, float]:
    """Five-point centred differences of A and B in s."""
    h = _ds(s)
    pts = np.array([s + k * h for k in _D5_OFFSETS])
    a, b = coefficients(pts, surface)
    w = np.array(_D5_WEIGHTS)
    return float(w @ a) / h, float(w @ b) / h


def neumann_residual(s: float, surface) -> float:
    """|A'(s) s^n + B'(s) s^m| normalised by |A'(s)| s^n + |B'(s)| s^m."""
    params = _boundary_of(surface).params
    da, db = coefficient_derivatives(s, surface)
    t1 = da * s**params.n
    t2 = db * s**params.m
    return abs(t1 + t2) / (abs(t1) + abs(t2))


def negativity_threshold(s: float, surface) -> Optional[float]:
    """The x above which w(., s) < 0, i.e. (-B/A)^(1/(n-m)); None when A(s) >= 0."""
    bc = _boundary_of(surface)
    params = bc.params
    h = float(bc.h(s))
    a, b = scaled_coefficients(h, float(F(s)), params)
    if a >= 0.0:
        return None
    return h * (-b / a) ** (1.0 / params.n_minus_m)


# ---------------------------------------------------------------------------
# verification grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    s_min: float = 1e-3
    s_max: float = 30.0
    n_s: int = 400
    n_x: int = 400
    x_low_ratio: float = 1e-4

    def s_values(self) -> np.ndarray:
        return np.geomspace(self.s_min, self.s_max, self.n_s)

    def x_values(self, s: float) -> np.ndarray:
        return np.geomspace(self.x_low_ratio * s, s, self.n_x)


@dataclass
class Witness:
    check: str
    h_inf: float
    x: float
    s: float
    w: float


@dataclass
class VIReport:
    h_inf: float
    stopping_ok: bool
    obstacle_ok: bool
    positivity_ok: bool
    witnesses: list

    @property
    def vi_ok(self) -> bool:
        return self.stopping_ok and self.obstacle_ok

    @property
    def all_ok(self) -> bool:
        return self.stopping_ok and self.obstacle_ok and self.positivity_ok

    def witness(self, check: str) -> Optional[Witness]:
        for wt in self.witnesses:
            if wt.check == check:
                return wt
        return None


def vi_report(surface, grid: GridSpec = GridSpec()) -> VIReport:
    """Check the variational inequality on a (s, x) grid.

    (a) generator of the reward <= 0 where stopping, (b) w >= reward where
    waiting, (c) w > 0 everywhere. Each failing check carries the first
    violating grid point (s-major order).
    """
    bc = _boundary_of(surface)
    params = bc.params
    s_vals = grid.s_values()
    x = np.geomspace(grid.x_low_ratio, 1.0, grid.n_x)[None, :] * s_vals[:, None]
    s = np.broadcast_to(s_vals[:, None], x.shape)
    h = bc.h(s_vals)[:, None]
    w = eval_w(x, s, bc)
    reward = np.maximum(F(s) / x - 1.0, 0.0)
    stopping = x <= h

    gen = generator_of_reward(x, s, params)
    bad_stop = stopping & (gen > VI_SLACK)
    bad_obst = ~stopping & (w < reward - VI_SLACK)
    bad_pos = w < -VI_SLACK

    witnesses = []
    for name, mask in (("stopping", bad_stop), ("obstacle", bad_obst), ("positivity", bad_pos)):
        if np.any(mask):
            i, j = np.argwhere(mask)[0]
            witnesses.append(Witness(name, bc.h_inf, float(x[i, j]), float(s[i, j]), float(w[i, j])))
    return VIReport(
        h_inf=bc.h_inf,
        stopping_ok=not np.any(bad_stop),
        obstacle_ok=not np.any(bad_obst),
        positivity_ok=not np.any(bad_pos),
        witnesses=witnesses,
    )


def coefficient_table(surface, s_values) -> list:
    a, b = coefficients(np.asarray(s_values, dtype=float), surface)
    return [{"s": float(s), "A": float(ai), "B": float(bi)} for s, ai, bi in zip(s_values, a, b)]


def value_table(surface, s_values, n_x: int = 50, x_low_ratio: float = 1e-2) -> list:
    bc = _boundary_of(surface)
    rows = []
    for s in s_values:
        xs = np.geomspace(x_low_ratio * s, s, n_x)
        w = eval_w(xs, np.full_like(xs, s), bc)
        h = float(bc.h(s))
        for xi, wi in zip(xs, w):
            rows.append({"x": float(xi), "s": float(s), "w": float(wi),
                         "region_flag": "stop" if xi <= h else "wait"})
    return rows


def second_derivative_limit(s: float, surface) -> float:
    """Closed-form lim_{x -> H(s)+} of d^2/dx^2 (w - F/x + 1): -mn H^-3 (G - H)."""
    bc = _boundary_of(surface)
    params = bc.params
    h = float(bc.h(s))
    g = params.g_inf * float(F(s))
    return -params.m * params.n * h**-3 * (g - h)


def transversality_floor(surface, x0: float) -> float:
    """A_inf x0^n, the lower bound on the transversality limit for h_inf below H°_inf."""
    return surface.a_inf * x0 ** surface.params.n
