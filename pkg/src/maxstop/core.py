"""Model constants and the elementary curves of the running-maximum stopping problem.

The underlying is a geometric Brownian motion ``dX = mu X dt + sigma X dW`` with
running maximum ``S``, discounted at rate ``r``; the reward is
``R(x, s) = (F(s)/x - 1)^+`` with ``F(s) = 1 - exp(-s)``.

Everything here is closed form apart from ``invert_theta`` (bisection).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionViolated, DomainError, InvalidParam

# below this, gamma(s) = F(s)/s is evaluated by its Taylor series
_GAMMA_SERIES_CUTOFF = 1e-8
_BISECTION_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    mu: float
    sigma: float
    r: float
    m: float
    n: float
    g_inf: float
    h_circ_inf: float
    q_dagger: float

    @property
    def sigma2(self) -> float:
        return self.sigma * self.sigma

    @property
    def n_minus_m(self) -> float:
        return self.n - self.m

    @property
    def theta_upper(self) -> float:
        """Right end (m+1)/m of the domain of theta; equals ``h_circ_inf``."""
        return (self.m + 1.0) / self.m

    @property
    def theta_numer(self) -> float:
        """(n+1)/n, the zero of the numerator inside theta."""
        return (self.n + 1.0) / self.n


def characteristic_roots(mu: float, sigma: float, r: float) -> tuple[float, float]:
    """Roots m < 0 < n of 0.5 sigma^2 k^2 + (mu - 0.5 sigma^2) k - r = 0.

    Uses the cancellation-free form: the larger-magnitude root from the
    quadratic formula, the other from the product c/a.
    """
    a = 0.5 * sigma * sigma
    b = mu - a
    c = -r
    disc = math.sqrt(b * b - 4.0 * a * c)
    q = -0.5 * (b + math.copysign(disc, b))
    k1 = q / a
    k2 = c / q
    return (min(k1, k2), max(k1, k2))


def build_params(mu: float, sigma: float, r: float) -> ModelParams:
    mu, sigma, r = float(mu), float(sigma), float(r)
    if not (math.isfinite(mu) and math.isfinite(sigma) and math.isfinite(r)):
        raise InvalidParam(f"non-finite parameter (mu={mu}, sigma={sigma}, r={r})")
    if r <= 0.0:
        raise InvalidParam(f"discount rate must be positive, got r={r}")
    if sigma == 0.0:
        raise InvalidParam("sigma must be nonzero")
    s2 = sigma * sigma
    # checked on (mu, sigma, r) directly so that the equality edge is exact
    if not s2 < r + mu:
        raise AssumptionViolated(
            f"sigma^2 < r + mu fails (m + 1 < 0 violated): sigma^2={s2:g}, r + mu={r + mu:g}"
        )
    if not s2 >= mu:
        raise AssumptionViolated(
            f"sigma^2 >= mu fails (m + n + 1 >= 0 violated): sigma^2={s2:g}, mu={mu:g}"
        )
    m, n = characteristic_roots(mu, sigma, r)
    g_inf = (m + 1.0) * (n + 1.0) / (m * n)
    h_circ_inf = (m + 1.0) / m
    partial = ModelParams(mu, sigma, r, m, n, g_inf, h_circ_inf, math.nan)
    q_dagger = invert_theta(1.0, partial)
    return ModelParams(mu, sigma, r, m, n, g_inf, h_circ_inf, q_dagger)


def root_residual(k: float, params: ModelParams) -> float:
    s2 = params.sigma2
    return 0.5 * s2 * k * k + (params.mu - 0.5 * s2) * k - params.r


def F(s):
    """F(s) = 1 - exp(-s), via expm1 so that small s keeps full precision."""
    return -np.expm1(-np.asarray(s, dtype=float)) if np.ndim(s) else -math.expm1(-s)


def log_F(s):
    """ln F(s); accurate both for s -> 0 and for large s (where it is ~ -exp(-s))."""
    if np.ndim(s):
        s = np.asarray(s, dtype=float)
        return np.where(s > 1.0, np.log1p(-np.exp(-s)), np.log(-np.expm1(-s)))
    return math.log1p(-math.exp(-s)) if s > 1.0 else math.log(-math.expm1(-s))


def s_of_log_F(u):
    """Inverse of ``log_F``: the max-level s with ln F(s) = u < 0."""
    if np.ndim(u):
        return -np.log(-np.expm1(np.asarray(u, dtype=float)))
    return -math.log(-math.expm1(u))


def _check_positive(name, v):
    if np.any(np.asarray(v) <= 0.0):
        raise DomainError(f"{name} must be positive")


def reward(x, s, params: ModelParams | None = None):
    """(F(s)/x - 1)^+ on the wedge 0 < x <= s."""
    x_arr, s_arr = np.asarray(x, dtype=float), np.asarray(s, dtype=float)
    if np.any(x_arr <= 0.0) or np.any(x_arr > s_arr):
        raise DomainError("reward requires 0 < x <= s")
    out = np.maximum(F(s_arr) / x_arr - 1.0, 0.0)
    return float(out) if out.ndim == 0 else out


def g_curve(s, params: ModelParams):
    """G(s) = G_inf F(s): the level above which the generator applied to the reward is positive."""
    _check_positive("s", s)
    return params.g_inf * F(s)


def generator_of_reward(x, s, params: ModelParams):
    """Closed form of L(F(s)/x - 1) = (sigma^2 - mu - r) F(s)/x + r."""
    return (params.sigma2 - params.mu - params.r) * F(s) / np.asarray(x, dtype=float) + params.r


def gamma(s):
    """gamma(s) = F(s)/s, decreasing from 1 (s -> 0) to 0 (s -> inf)."""
    if np.ndim(s):
        s = np.asarray(s, dtype=float)
        _check_positive("s", s)
        small = s < _GAMMA_SERIES_CUTOFF
        safe = np.where(small, 1.0, s)
        return np.where(small, 1.0 - s / 2.0 + s * s / 6.0, -np.expm1(-safe) / safe)
    if s <= 0.0:
        raise DomainError("gamma requires s > 0")
    if s < _GAMMA_SERIES_CUTOFF:
        return 1.0 - s / 2.0 + s * s / 6.0
    return -math.expm1(-s) / s


def theta(q: float, params: ModelParams) -> float:
    hi = params.theta_upper
    if not 0.0 < q < hi:
        raise DomainError(f"theta requires 0 < q < (m+1)/m = {hi:g}, got {q}")
    return q * ((params.theta_numer - q) / (hi - q)) ** (1.0 / params.n_minus_m)


def invert_theta(y: float, params: ModelParams) -> float:
    """Solve theta(q) = y by bisection; theta has infinite slope at its right end."""
    if not y > 0.0:
        raise DomainError(f"invert_theta requires y > 0, got {y}")
    lo, hi = 0.0, params.theta_upper
    while hi - lo > _BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if theta(mid, params) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def zeta(s: float, params: ModelParams) -> float:
    """Zero curve of the transformed ODE's numerator: theta^{-1}(1/gamma(s))."""
    if s <= 0.0:
        raise DomainError("zeta requires s > 0")
    return invert_theta(1.0 / gamma(s), params)


def zeta_numerator(s: float, q: float, params: ModelParams) -> float:
    """((n+1)/n - q)(gamma(s) q)^(n-m) + q - (m+1)/m; negative below zeta(s), positive above."""
    return (params.theta_numer - q) * (gamma(s) * q) ** params.n_minus_m + q - params.theta_upper
