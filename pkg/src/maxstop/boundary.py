"""Free-boundary ODE family in the ratio variable Q = H/F.

The ODE for the boundary H is integrated in the transformed form

    d ln Q / du = Qcal(s, Q),     u = ln F(s),

which is regular as s -> 0 (u -> -inf). As s -> inf, u -> 0-, so the whole
tail [s, inf) collapses into an interval of length ~exp(-s) in u; this is what
makes shooting from a far anchor with a prescribed asymptote well posed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import _rk
from .core import F, ModelParams, g_curve, gamma, log_F, s_of_log_F, zeta
from .errors import DomainError, ExtrapolationError, ShootingFailure, SingularityError

POLE_GUARD = 1e-12


class TerminalClass(enum.Enum):
    HITS_UPPER_WALL = "hits_upper_wall"  # q -> 1/gamma(s)
    HITS_ZERO = "hits_zero"
    CONVERGES_FINITE = "converges_finite"  # reached the integration limit inside D_Q
    HITS_G_INF_FROM_ABOVE = "hits_g_inf_from_above"
    HITS_G_INF_FROM_BELOW = "hits_g_inf_from_below"


@dataclass(frozen=True)
class Controls:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step_u: float = 0.01
    max_step_rel: float = 0.01  # step cap relative to |u|; resolves the s -> inf end
    s_min: float = 1e-6
    s_max: float = 40.0
    tail_tol: float = 1e-10  # anchor where the neglected tail of d ln F is below this
    asymptote_tol: float = 1e-8
    separatrix_delta: float = 1e-7
    pole_guard: float = POLE_GUARD
    optimal_tol: float = 1e-6


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------


def _qcal_parts(ln_gamma: float, y: float, params: ModelParams):
    q = math.exp(y)
    z = params.n_minus_m * (ln_gamma + y)
    p = math.exp(z)  # (gamma q)^(n-m)
    one_minus_p = -math.expm1(z)
    num = (params.theta_numer - q) * p + q - params.theta_upper
    return q, num, one_minus_p


def q_rhs(s: float, q: float, params: ModelParams, guard: float = POLE_GUARD) -> float:
    """Qcal(s, q): the factor multiplying d ln F in d ln Q."""
    if s <= 0.0 or q <= 0.0:
        raise DomainError("q_rhs requires s > 0 and q > 0")
    gq = gamma(s) * q
    if abs(q - params.g_inf) < guard or abs(gq - 1.0) < guard:
        raise SingularityError(f"too close to a pole at (s={s}, q={q})")
    if gq > 1.0:
        raise DomainError("q above the upper wall 1/gamma(s)")
    _, num, one_minus_p = _qcal_parts(math.log(gamma(s)), math.log(q), params)
    return num / ((params.g_inf - q) * one_minus_p)


def limit_slope(q: float, params: ModelParams) -> float:
    """l(q) = (q - (m+1)/m)/(G_inf - q), the large-s limit of Qcal(s, q)."""
    return (q - params.h_circ_inf) / (params.g_inf - q)


def h_rhs(s: float, h: float, params: ModelParams, guard: float = POLE_GUARD) -> float:
    """Slope of the free boundary H at (s, h)."""
    if not 0.0 < h < s:
        raise DomainError("h_rhs requires 0 < h < s")
    g = g_curve(s, params)
    ratio = (h / s) ** params.n_minus_m
    if abs(g - h) < guard * max(g, 1e-300) or abs(1.0 - h / s) < guard:
        raise SingularityError(f"too close to a pole at (s={s}, h={h})")
    m, n = params.m, params.n
    num = math.exp(-s) * ((n + 1.0) * ratio - (m + 1.0)) * h
    den = -m * n * (g - h) * (1.0 - ratio)
    return num / den


def _rhs_u(params: ModelParams, side: float, guard: float, ref: float = 0.0):
    """d ln Q / du as a function of (u, d = ln Q - ref), refusing to cross the G_inf pole.

    Working with the deviation from a reference level keeps relative precision
    in the far tail, where ln Q moves by less than 1e-10 over many steps.
    """
    g_inf = params.g_inf

    def rhs(u, d):
        y = ref + d
        if not u < 0.0:
            raise SingularityError("u must stay negative")
        s = s_of_log_F(u)
        ln_gamma = u - math.log(s)
        q, num, one_minus_p = _qcal_parts(ln_gamma, y, params)
        dist = q - g_inf
        if abs(dist) < guard or dist * side < 0.0 or one_minus_p < guard:
            raise SingularityError("pole")
        return num / (-dist * one_minus_p)

    return rhs


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QPath:
    """A sampled solution of the Q-ODE, stored in increasing s."""

    s: np.ndarray
    q: np.ndarray
    u: np.ndarray
    ln_q_ref: float  # ln Q = ln_q_ref + dev
    dev: np.ndarray
    dlnq_du: np.ndarray
    local_error: np.ndarray
    s_lower: float
    s_upper: float
    upper_is_infinite: bool
    terminal_class: TerminalClass
    _spline: CubicHermiteSpline = field(repr=False, compare=False, default=None)

    @classmethod
    def from_nodes(cls, u, d, f, err, terminal_class, ln_q_ref=0.0, upper_is_infinite=False):
        order = np.argsort(u)
        u = np.asarray(u, dtype=float)[order]
        y = np.asarray(d, dtype=float)[order]
        f = np.asarray(f, dtype=float)[order]
        err = np.asarray(err, dtype=float)[order]
        # drop duplicate abscissae (can only arise from a zero-length final step)
        keep = np.concatenate(([True], np.diff(u) > 0.0))
        u, y, f, err = u[keep], y[keep], f[keep], err[keep]
        s = s_of_log_F(u)
        spline = CubicHermiteSpline(u, y, f) if len(u) > 1 else None
        return cls(
            s=s,
            q=np.exp(ln_q_ref + y),
            u=u,
            ln_q_ref=float(ln_q_ref),
            dev=y,
            dlnq_du=f,
            local_error=err,
            s_lower=float(s[0]),
            s_upper=float(s[-1]),
            upper_is_infinite=upper_is_infinite,
            terminal_class=terminal_class,
            _spline=spline,
        )

    def __len__(self):
        return len(self.s)

    def covers(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return (s >= self.s_lower * (1 - 1e-12)) & (s <= self.s_upper * (1 + 1e-12))

    def ln_q_at(self, s):
        """Dense ln Q by cubic Hermite interpolation in u using the ODE slopes at the nodes."""
        s_arr = np.asarray(s, dtype=float)
        if not np.all(self.covers(s_arr)):
            raise ExtrapolationError(
                f"s outside sampled range [{self.s_lower:g}, {self.s_upper:g}]"
            )
        u = np.clip(log_F(s_arr), self.u[0], self.u[-1])
        out = self.ln_q_ref + self._spline(u)
        return float(out) if np.ndim(s) == 0 else out

    def dev_at_u(self, u):
        """Dense deviation ln Q - ln_q_ref as a function of u (no range check)."""
        return self._spline(np.asarray(u, dtype=float))

    def q_at(self, s):
        return np.exp(self.ln_q_at(s))


def _classify(params: ModelParams, guard: float, ref: float = 0.0):
    def stop(u, d):
        y = ref + d
        if y < -700.0:
            return TerminalClass.HITS_ZERO.value
        s = s_of_log_F(u)
        q = math.exp(y)
        if 1.0 - math.exp(u - math.log(s) + y) < guard:
            return TerminalClass.HITS_UPPER_WALL.value
        if abs(q - params.g_inf) < guard:
            return (
                TerminalClass.HITS_G_INF_FROM_ABOVE.value
                if q > params.g_inf
                else TerminalClass.HITS_G_INF_FROM_BELOW.value
            )
        return None

    def near_pole(u, d):
        y = ref + d
        s = s_of_log_F(u)
        q = math.exp(y)
        if 1.0 - math.exp(u - math.log(s) + y) < 1e-6:
            return TerminalClass.HITS_UPPER_WALL.value
        if abs(q - params.g_inf) < 1e-6 * params.g_inf:
            return (
                TerminalClass.HITS_G_INF_FROM_ABOVE.value
                if q > params.g_inf
                else TerminalClass.HITS_G_INF_FROM_BELOW.value
            )
        return None

    return stop, near_pole


def in_domain(s: float, q: float, params: ModelParams, guard: float = POLE_GUARD) -> bool:
    return s > 0.0 and 0.0 < q and gamma(s) * q < 1.0 - guard and abs(q - params.g_inf) >= guard


def _integrate_u(u0, d0, u_end, params, controls, side, ref):
    rhs = _rhs_u(params, side, controls.pole_guard, ref)
    stop, near_pole = _classify(params, controls.pole_guard, ref)
    first = min(controls.max_step_u, 1e-2 * abs(u0), abs(u_end - u0)) or None
    return _rk.integrate(
        rhs,
        u0,
        d0,
        u_end,
        rtol=controls.rtol,
        atol=controls.atol,
        max_step=controls.max_step_u,
        max_step_rel=controls.max_step_rel,
        first_step=first,
        stop=stop,
        near_pole=near_pole,
    )


def integrate_from(
    s0: float,
    q0: float,
    direction: str,
    params: ModelParams,
    controls: Controls = Controls(),
) -> QPath:
    """Integrate the Q-ODE from Q(s0) = q0 forward (to ``controls.s_max``) or backward (to ``controls.s_min``)."""
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    if not in_domain(s0, q0, params, controls.pole_guard):
        raise DomainError(f"(s0={s0}, q0={q0}) is not in the ODE domain")
    side = 1.0 if q0 > params.g_inf else -1.0
    u0 = log_F(s0)
    u_end = log_F(controls.s_max if direction == "forward" else controls.s_min)
    ref = math.log(q0)
    res = _integrate_u(u0, 0.0, u_end, params, controls, side, ref)
    cls = TerminalClass(res.stop_reason) if res.stop_reason != "reached_end" else TerminalClass.CONVERGES_FINITE
    upper_inf = direction == "forward" and cls is TerminalClass.CONVERGES_FINITE
    return QPath.from_nodes(
        res.t, res.y, res.f, res.err, cls, ln_q_ref=ref, upper_is_infinite=upper_inf
    )


def integrate_through(s0, q0, params, controls: Controls = Controls()) -> QPath:
    """Both directions from (s0, q0), merged into one path; terminal class is the forward end's."""
    back = integrate_from(s0, q0, "backward", params, controls)
    fwd = integrate_from(s0, q0, "forward", params, controls)
    return QPath.from_nodes(
        np.concatenate((back.u, fwd.u[1:])),
        np.concatenate((back.dev, fwd.dev[1:])),
        np.concatenate((back.dlnq_du, fwd.dlnq_du[1:])),
        np.concatenate((back.local_error, fwd.local_error[1:])),
        fwd.terminal_class,
        ln_q_ref=fwd.ln_q_ref,
        upper_is_infinite=fwd.upper_is_infinite,
    )


# ---------------------------------------------------------------------------
# boundaries with a prescribed asymptote
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryCurve:
    """Free boundary H = F Q with lim H = h_inf.

    ``q_path`` covers [s_min, s_anchor]; beyond the anchor Q is given by its
    tail expansion, so ``q``/``h`` are defined on [s_min, inf).
    """

    q_path: QPath
    h_inf: float
    is_optimal: bool
    s_anchor: float
    is_separatrix: bool
    asymptote_error: Optional[float]
    separatrix_delta: Optional[float]
    params: ModelParams = field(repr=False)

    @property
    def h_samples(self) -> np.ndarray:
        return np.column_stack((self.q_path.s, F(self.q_path.s) * self.q_path.q))

    @property
    def s_min(self) -> float:
        return self.q_path.s_lower

    def ln_q(self, s):
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s_arr < self.s_min * (1 - 1e-12)):
            raise ExtrapolationError(f"s below sampled range (s_min={self.s_min:g})")
        out = np.empty_like(s_arr)
        inner = s_arr <= self.s_anchor
        if np.any(inner):
            out[inner] = self.q_path.ln_q_at(np.maximum(s_arr[inner], self.s_min))
        if np.any(~inner):
            out[~inner] = _tail_ln_q(s_arr[~inner], self.h_inf, self.is_separatrix, self.params)
        return float(out[0]) if np.ndim(s) == 0 else out

    def q(self, s):
        return np.exp(self.ln_q(s))

    def h(self, s):
        return F(s) * self.q(s)


def _separatrix_k(params: ModelParams) -> float:
    return params.g_inf * (params.g_inf - params.h_circ_inf)


def _tail_dev(s, q_inf, is_separatrix, params):
    """ln Q - ln q_inf on the far tail, from the local expansion of the ODE."""
    u = log_F(np.asarray(s, dtype=float))
    if is_separatrix:
        # near q = G_inf:  p dp/du = -K  with p = G_inf - Q  ->  p = sqrt(2 K |u|)
        return np.log1p(-np.sqrt(2.0 * _separatrix_k(params) * np.abs(u)) / params.g_inf)
    # Qcal is ~constant over the tail, so ln Q = ln q_inf + Qcal * ln F
    qc = np.array([q_rhs(si, q_inf, params) for si in np.atleast_1d(s)])
    return qc * u


def _tail_ln_q(s, q_inf, is_separatrix, params):
    return math.log(q_inf) + _tail_dev(s, q_inf, is_separatrix, params)


def anchor_level(q_inf: float, params: ModelParams, controls: Controls = Controls()) -> float:
    """Max-level where backward shooting starts for asymptote ``q_inf``."""
    if q_inf >= params.g_inf:
        delta = controls.separatrix_delta
        u_abs = delta * delta / (2.0 * _separatrix_k(params))
    else:
        u_abs = controls.tail_tol / max(1.0, abs(limit_slope(q_inf, params)))
    return float(s_of_log_F(-u_abs))


def solve_with_asymptote(
    q_inf: float, params: ModelParams, controls: Controls = Controls()
) -> BoundaryCurve:
    """The unique ODE solution below G with lim_{s->inf} Q(s) = q_inf, by backward shooting."""
    g_inf = params.g_inf
    if not 0.0 < q_inf <= g_inf * (1 + 1e-15):
        raise DomainError(f"q_inf must lie in ]0, G_inf] = ]0, {g_inf:g}], got {q_inf}")
    is_sep = q_inf >= g_inf * (1 - 1e-15)
    if is_sep:
        q_inf = g_inf
    s_a = anchor_level(q_inf, params, controls)
    ref = math.log(q_inf)
    d_a = float(_tail_dev(np.array([s_a]), q_inf, is_sep, params)[0])
    u_a = log_F(s_a)
    res = _integrate_u(u_a, d_a, log_F(controls.s_min), params, controls, -1.0, ref)
    if res.stop_reason != "reached_end":
        raise ShootingFailure(f"backward shot for q_inf={q_inf} stopped early: {res.stop_reason}")
    path = QPath.from_nodes(
        res.t, res.y, res.f, res.err, TerminalClass.CONVERGES_FINITE, ln_q_ref=ref
    )

    asymptote_error = None
    if not is_sep:
        asymptote_error = _reverify(path, q_inf, s_a, params, controls)
        if not asymptote_error < controls.asymptote_tol:
            raise ShootingFailure(
                f"forward re-integration misses q_inf={q_inf} by {asymptote_error:.3g}"
            )
    return BoundaryCurve(
        q_path=path,
        h_inf=q_inf,
        is_optimal=abs(q_inf - params.h_circ_inf) < controls.optimal_tol,
        s_anchor=s_a,
        is_separatrix=is_sep,
        asymptote_error=asymptote_error,
        separatrix_delta=controls.separatrix_delta if is_sep else None,
        params=params,
    )


def _reverify(path: QPath, q_inf, s_a, params, controls) -> float:
    """Forward re-integration from a moderate level out past the anchor; returns |Q(end) - q_inf|.

    Forward integration amplifies errors by ~exp(l'(q_inf) |u|); the start is
    placed where that factor is at most e^2.
    """
    dl = (params.g_inf - params.h_circ_inf) / (params.g_inf - q_inf) ** 2
    # start from an integrator node so no interpolation error enters
    i = int(np.argmin(np.abs(path.u - (-min(0.5, 2.0 / dl)))))
    u_end = log_F(max(controls.s_max, s_a + 10.0))
    res = _integrate_u(path.u[i], path.dev[i], u_end, params, controls, -1.0, path.ln_q_ref)
    if res.stop_reason != "reached_end":
        return math.inf
    return abs(math.exp(path.ln_q_ref + res.y[-1]) - q_inf)


def ode_residual(curve: "BoundaryCurve", s_values, rel_step: float = 1e-3) -> np.ndarray:
    """Centred difference of ln Q in u = ln F minus Qcal(s, Q), at each s.

    Only the integrated part [s_min, s_anchor] is checked (beyond the anchor Q
    is the closed-form tail). The stencil half-width is ``rel_step * min(1, |u|)``
    so that it scales with the resolution of the solution as s -> inf.
    """
    path = curve.q_path
    s = np.asarray(s_values, dtype=float)
    if np.any(s < path.s_lower) or np.any(s > path.s_upper):
        raise ExtrapolationError("ode_residual is defined on the integrated range only")
    u = log_F(s)
    h = rel_step * np.minimum(1.0, np.abs(u))
    lo = np.maximum(u - h, path.u[0])
    hi = np.minimum(u + h, path.u[-1])
    fd = (path.dev_at_u(hi) - path.dev_at_u(lo)) / (hi - lo)
    side = -1.0 if curve.h_inf <= curve.params.g_inf else 1.0
    rhs = _rhs_u(curve.params, side, 0.0, path.ln_q_ref)
    qc = np.array([rhs(ui, di) for ui, di in zip(u, path.dev_at_u(u))])
    return fd - qc


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

DEFAULT_OUTPUT_GRID = np.geomspace(1e-3, 30.0, 300)


@dataclass
class FamilyMember:
    curve_id: int
    q_inf: Optional[float]
    curve: Optional[BoundaryCurve] = None
    path: Optional[QPath] = None  # for starts above G_inf
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class CurveFamily:
    members: list
    rows: list  # dicts with keys CSV_COLUMNS

    @property
    def curves(self):
        return [mb.curve for mb in self.members if mb.curve is not None]


CSV_COLUMNS = ("s", "q", "H", "G(s)", "zeta(s)", "curve_id", "q_inf")


def default_asymptotes(params: ModelParams) -> list:
    """Seven asymptotes spanning ]0, G_inf]: three below H°_inf, H°_inf, three above (last = separatrix)."""
    h, g = params.h_circ_inf, params.g_inf
    return [0.25 * h, 0.5 * h, 0.75 * h, h, h + (g - h) / 3.0, h + 2.0 * (g - h) / 3.0, g]


def curve_family(
    q_inf_list: Sequence[float],
    params: ModelParams,
    controls: Controls = Controls(),
    upper_starts: Sequence[tuple] = (),
    s_grid: Optional[np.ndarray] = None,
) -> CurveFamily:
    """Solutions for each asymptote plus optional decreasing curves started above G_inf.

    A failure on one curve is recorded on its member and does not abort the family.
    """
    grid = DEFAULT_OUTPUT_GRID if s_grid is None else np.asarray(s_grid, dtype=float)
    g_s = g_curve(grid, params)
    z_s = np.array([zeta(s, params) for s in grid])
    members, rows = [], []
    cid = 0
    for q_inf in q_inf_list:
        mb = FamilyMember(cid, float(q_inf))
        try:
            mb.curve = solve_with_asymptote(float(q_inf), params, controls)
        except (ShootingFailure, DomainError, SingularityError) as exc:
            mb.error = f"{type(exc).__name__}: {exc}"
        members.append(mb)
        cid += 1
    for s0, q0 in upper_starts:
        mb = FamilyMember(cid, None)
        try:
            mb.path = integrate_through(float(s0), float(q0), params, controls)
        except Exception as exc:  # noqa: BLE001 - recorded per curve
            mb.error = f"{type(exc).__name__}: {exc}"
        members.append(mb)
        cid += 1

    for mb in members:
        if mb.curve is not None:
            sel = grid >= mb.curve.s_min
            q = mb.curve.q(grid[sel])
        elif mb.path is not None:
            sel = mb.path.covers(grid)
            q = mb.path.q_at(grid[sel]) if np.any(sel) else np.empty(0)
        else:
            continue
        for s, qq, gg, zz in zip(grid[sel], q, g_s[sel], z_s[sel]):
            rows.append(
                {
                    "s": float(s),
                    "q": float(qq),
                    "H": float(F(s) * qq),
                    "G(s)": float(gg),
                    "zeta(s)": float(zz),
                    "curve_id": mb.curve_id,
                    "q_inf": mb.q_inf,
                }
            )
    return CurveFamily(members, rows)
