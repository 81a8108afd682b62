"""Scalar Dormand-Prince 5(4) integrator with embedded error control.

Kept deliberately small: the boundary ODE is scalar and needs custom
termination (pole guards) that is awkward to express through
``scipy.integrate.solve_ivp`` events once the right-hand side itself can raise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import SingularityError, StepFailure

# Dormand & Prince (1980), RK5(4)7M
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
)  # b5 - b4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


@dataclass
class RKResult:
    t: list = field(default_factory=list)
    y: list = field(default_factory=list)
    f: list = field(default_factory=list)
    err: list = field(default_factory=list)  # local error estimate of the step ending at each node
    stop_reason: str = "reached_end"
    n_rejected: int = 0


def _try_step(rhs, t, y, f0, h):
    k = [f0]
    for i in range(1, 7):
        yi = y + h * sum(a * kk for a, kk in zip(_A[i], k))
        k.append(rhs(t + _C[i] * h, yi))
    y_new = y + h * sum(b * kk for b, kk in zip(_B5, k))
    err = h * sum(e * kk for e, kk in zip(_E, k))
    # FSAL: the last stage is f(t + h, y_new)
    return y_new, err, k[6]


def integrate(
    rhs: Callable[[float, float], float],
    t0: float,
    y0: float,
    t_end: float,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    max_step: float = math.inf,
    max_step_rel: float = math.inf,
    first_step: Optional[float] = None,
    stop: Optional[Callable[[float, float], Optional[str]]] = None,
    near_pole: Optional[Callable[[float, float], Optional[str]]] = None,
    max_steps: int = 200_000,
) -> RKResult:
    """Integrate ``y' = rhs(t, y)`` from ``t0`` towards ``t_end`` (either direction).

    ``stop(t, y)`` is checked after each accepted step and may return a reason
    string to halt. If the step size collapses, ``near_pole(t, y)`` is asked
    whether a known singularity explains it; if so integration halts with that
    reason, otherwise ``StepFailure`` is raised. ``max_step_rel`` additionally
    caps the step at that fraction of ``|t|``.
    """
    direction = 1.0 if t_end > t0 else -1.0
    span = abs(t_end - t0)
    res = RKResult()
    f0 = rhs(t0, y0)
    res.t.append(t0)
    res.y.append(y0)
    res.f.append(f0)
    res.err.append(0.0)
    if span == 0.0:
        return res

    h = first_step if first_step is not None else min(max_step, 1e-3 * span)
    h = min(abs(h), max_step, span)
    t, y = t0, y0
    for _ in range(max_steps):
        remaining = abs(t_end - t)
        if remaining <= 0.0:
            res.stop_reason = "reached_end"
            return res
        h = min(h, remaining, max_step, max_step_rel * abs(t) if t != 0.0 else math.inf)
        last = h >= remaining
        step = direction * h
        try:
            y_new, err, f_new = _try_step(rhs, t, y, res.f[-1], step)
            t_new = t_end if last else t + step
            ok = math.isfinite(y_new) and math.isfinite(f_new)
        except (SingularityError, ValueError, OverflowError, ZeroDivisionError):
            ok = False
        if ok:
            scale = atol + rtol * max(abs(y), abs(y_new))
            ratio = abs(err) / scale
        if ok and ratio <= 1.0:
            t, y = t_new, y_new
            res.t.append(t)
            res.y.append(y)
            res.f.append(f_new)
            res.err.append(abs(err))
            if stop is not None:
                reason = stop(t, y)
                if reason is not None:
                    res.stop_reason = reason
                    return res
            fac = _MAX_FACTOR if ratio == 0.0 else min(_MAX_FACTOR, _SAFETY * ratio ** -0.2)
            h = h * max(fac, 1.0)
        else:
            res.n_rejected += 1
            fac = _MIN_FACTOR if not ok else max(_MIN_FACTOR, _SAFETY * ratio ** -0.2)
            h = h * fac
            if h < 1e-15 * max(abs(t), 1e-300) or h < 1e-300:
                reason = near_pole(t, y) if near_pole is not None else None
                if reason is None:
                    raise StepFailure(f"step size underflow at t={t!r}, y={y!r}")
                res.stop_reason = reason
                return res
    raise StepFailure(f"exceeded {max_steps} steps")
