"""Monte-Carlo estimates for boundary-stopping rules on (X, S).

Log-price steps are exact (GBM is log-normal). Within a step the running
maximum is either read off the endpoints (``GridOnly``) or drawn from the
exact law of the Brownian-bridge maximum in log space (``BridgeSampled``).
Stopping is checked at the monitoring times only.

Randomness comes from numpy's counter-based Philox generator, one stream per
fixed block of paths, so the estimate is a pure function of (config, seed)
whatever order the blocks are run in.
Several boundaries can be run on the same paths (common random numbers); a
path is simulated until every rule has stopped or the horizon is reached.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .boundary import BoundaryCurve
from .core import ModelParams
from .errors import ConfigError
from .value import eval_w

# Paths are processed in fixed blocks; block b of estimator e draws normals
# from Philox with key = seed and counter words (0, 0, e, b), and uniforms
# from (0, 1, e, b). Results therefore
# depend only on (config, seed), not on how blocks are scheduled.
PATHS_PER_STREAM = 4096
_STREAM_STOPPING = 1
_STREAM_HORIZON = 2
_STREAM_TERMINAL = 3

_TABLE_SIZE = 1 << 16
_TABLE_TOP = 40.0  # F(40) == 1 in double precision


class MaxMode(enum.Enum):
    BRIDGE_SAMPLED = "bridge"
    GRID_ONLY = "grid"


@dataclass(frozen=True)
class McConfig:
    x0: float = 0.5
    s0: float = 1.0
    dt: float = 1e-3
    t_max: float = 50.0
    n_paths: int = 100_000
    seed: int = 20240607
    max_mode: MaxMode = MaxMode.BRIDGE_SAMPLED
    check_paths: bool = False  # assert S >= X and S nondecreasing inside the kernel

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ConfigError("dt must be positive")
        if not self.t_max >= self.dt:
            raise ConfigError("t_max must be at least dt")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be at least 1")
        if not self.s0 >= self.x0 > 0.0:
            raise ConfigError("need s0 >= x0 > 0")
        if isinstance(self.max_mode, str):
            object.__setattr__(self, "max_mode", MaxMode(self.max_mode))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    discretization_note: str

    def as_report(self, config: McConfig) -> dict:
        return {"mean": self.mean, "se": self.std_error, "n": self.n_paths,
                "dt": config.dt, "seed": config.seed}


def summarize(samples: np.ndarray, note: str = "") -> McEstimate:
    """Mean and standard error with exactly rounded sums (order-insensitive)."""
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    mean = math.fsum(samples) / n
    if n > 1:
        var = math.fsum((samples - mean) ** 2) / (n - 1)
    else:
        var = 0.0
    return McEstimate(mean, math.sqrt(var / n), n, note)


def monitoring_bias_margin(value: float, params: ModelParams, dt: float) -> float:
    """Allowance for checking the stopping rule on a grid.

    Discrete monitoring of a level by GBM behaves like continuous monitoring of
    a level shifted by beta sigma sqrt(dt) in log space, beta = -zeta(1/2)/sqrt(2pi)
    (Broadie, Glasserman & Kou 1997). The margin is that relative shift applied
    to the value; it is one-sided in effect, since a grid-monitored rule is an
    admissible stopping time and cannot beat the value.
    """
    beta = 0.5825971579390106
    return beta * params.sigma * math.sqrt(dt) * abs(value)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

# Above this exponent the bridge maximum cannot reach the running max for any
# representable uniform draw (exp(-40) ~ 4e-18), so no uniform is consumed.
_CROSS_EXPONENT_CUTOFF = 40.0


@njit(cache=True)
def _ln_h_lookup(ln_s, table_start, table_step, table_row, top_value):
    t = (ln_s - table_start) / table_step
    n = table_row.shape[0]
    if t >= n - 1:
        return top_value
    if t <= 0.0:
        return table_row[0]
    i = int(t)
    f = t - i
    return table_row[i] * (1.0 - f) + table_row[i + 1] * f


@njit(cache=True, inline="always")
def _bridge_step(rng_u, lx, ls, dl, var):
    """New running max after a log-step dl, sampling the bridge maximum only when it can matter."""
    b = ls - lx - dl
    if b > 0.0:
        ex = 2.0 * (ls - lx) * b / var
        if ex > _CROSS_EXPONENT_CUTOFF:
            return ls
        u = 1.0 - rng_u.random()  # in ]0, 1]
        if u >= math.exp(-ex):
            return ls
    else:
        u = 1.0 - rng_u.random()
    m = lx + 0.5 * (dl + math.sqrt(dl * dl - 2.0 * var * math.log(u)))
    return m if m > ls else ls


@njit(cache=True)
def _stopping_kernel(
    rng_z, rng_u, n_paths, payoff, stop_step, ln_x0, ln_s0, nu, sig, dt, n_steps, rate,
    table_start, table_step, table, top_values, bridge, check,
):
    n_rules = table.shape[0]
    sdt = sig * math.sqrt(dt)
    var = sig * sig * dt
    ln_h = np.empty(n_rules)
    alive = np.empty(n_rules, dtype=np.bool_)
    stop_lx = np.empty(n_rules)
    stop_ls = np.empty(n_rules)
    f0 = -math.expm1(-math.exp(ln_s0))
    for p in range(n_paths):
        lx = ln_x0
        ls = ln_s0
        n_alive = 0
        for k in range(n_rules):
            ln_h[k] = _ln_h_lookup(ls, table_start, table_step, table[k], top_values[k])
            if lx <= ln_h[k]:
                alive[k] = False
                payoff[k, p] = f0 / math.exp(lx) - 1.0
                stop_step[k, p] = 0
            else:
                alive[k] = True
                n_alive += 1
        highest = -np.inf  # largest boundary level among rules still running
        for k in range(n_rules):
            if alive[k]:
                highest = max(highest, ln_h[k])
        step = 0
        while n_alive > 0 and step < n_steps:
            step += 1
            dl = nu * dt + sdt * rng_z.standard_normal()
            if bridge:
                ls_new = _bridge_step(rng_u, lx, ls, dl, var)
            else:
                ls_new = max(ls, lx + dl)
            lx += dl
            if check and (ls_new < lx or ls_new < ls):
                raise AssertionError("running maximum below the price or decreasing")
            if ls_new > ls:
                ls = ls_new
                highest = -np.inf
                for k in range(n_rules):
                    if alive[k]:
                        ln_h[k] = _ln_h_lookup(ls, table_start, table_step, table[k], top_values[k])
                        highest = max(highest, ln_h[k])
            if lx <= highest:
                highest = -np.inf
                for k in range(n_rules):
                    if alive[k]:
                        if lx <= ln_h[k]:
                            alive[k] = False
                            n_alive -= 1
                            stop_step[k, p] = step
                            stop_lx[k] = lx
                            stop_ls[k] = ls
                        else:
                            highest = max(highest, ln_h[k])
        # payoffs are formed outside the step loop, which keeps that loop lean
        for k in range(n_rules):
            if stop_step[k, p] > 0:
                fs = -math.expm1(-math.exp(stop_ls[k]))
                disc = math.exp(-rate * stop_step[k, p] * dt)
                payoff[k, p] = disc * (fs / math.exp(stop_lx[k]) - 1.0)


@njit(cache=True)
def _horizon_kernel(rng_z, rng_u, n_paths, out_x, out_s, ln_x0, ln_s0, nu, sig, times):
    """Exact joint samples of (ln X_T, ln S_T) at the given increasing times."""
    for p in range(n_paths):
        lx = ln_x0
        ls = ln_s0
        t_prev = 0.0
        for i in range(times.shape[0]):
            dt = times[i] - t_prev
            t_prev = times[i]
            if dt > 0.0:
                dl = nu * dt + sig * math.sqrt(dt) * rng_z.standard_normal()
                u = 1.0 - rng_u.random()
                m = lx + 0.5 * (dl + math.sqrt(dl * dl - 2.0 * sig * sig * dt * math.log(u)))
                if m > ls:
                    ls = m
                lx += dl
            out_x[i, p] = lx
            out_s[i, p] = ls


@njit(cache=True)
def _terminal_kernel(rng_z, n_paths, out, ln_x0, nu, sig, dt, n_steps):
    sdt = sig * math.sqrt(dt)
    for p in range(n_paths):
        lx = ln_x0
        for _ in range(n_steps):
            lx += nu * dt + sdt * rng_z.standard_normal()
        out[p] = lx


# ---------------------------------------------------------------------------
# public estimators
# ---------------------------------------------------------------------------


def _boundary_table(boundary: BoundaryCurve, s0: float):
    top = max(_TABLE_TOP, 2.0 * s0)
    ln_s = np.linspace(math.log(s0), math.log(top), _TABLE_SIZE)
    s = np.exp(ln_s)
    ln_h = np.log(boundary.h(s))
    return ln_s[0], ln_s[1] - ln_s[0], ln_h, float(ln_h[-1])


def _note(config: McConfig) -> str:
    tag = "bridge-max" if config.max_mode is MaxMode.BRIDGE_SAMPLED else "grid-max"
    return f"{tag}; stopping monitored every dt={config.dt:g}; low (admissible rule, late detection)"


@dataclass(frozen=True)
class StoppedPaths:
    """Per-path discounted payoffs, one row per boundary, on common paths."""

    payoffs: np.ndarray
    stop_steps: np.ndarray
    config: McConfig

    def estimate(self, k: int = 0) -> McEstimate:
        return summarize(self.payoffs[k], _note(self.config))

    def difference(self, i: int, j: int) -> McEstimate:
        """Estimate of value(i) - value(j) with the paired (joint) standard error."""
        return summarize(self.payoffs[i] - self.payoffs[j], "paired difference")

    @property
    def stopped_fraction(self) -> np.ndarray:
        return np.mean(self.stop_steps >= 0, axis=1)


def _streams(seed: int, estimator: int, n_paths: int):
    """Yield (first path, block length, normal generator, uniform generator) per path block.

    Normals and bridge uniforms come from separate streams, so switching the
    max mode (which changes how many uniforms are used) leaves the price
    paths untouched.
    """
    key = int(seed) & 0xFFFFFFFFFFFFFFFF
    for b, start in enumerate(range(0, n_paths, PATHS_PER_STREAM)):
        rng_z = np.random.Generator(np.random.Philox(key=key, counter=[0, 0, estimator, b]))
        rng_u = np.random.Generator(np.random.Philox(key=key, counter=[0, 1, estimator, b]))
        yield start, min(PATHS_PER_STREAM, n_paths - start), rng_z, rng_u


def simulate_paths(
    config: McConfig, boundaries: Sequence[BoundaryCurve], params: ModelParams
) -> StoppedPaths:
    if not boundaries:
        raise ConfigError("need at least one boundary")
    for bc in boundaries:
        if bc.params != params:
            raise ConfigError("boundary was built for different model parameters")
        if config.s0 < bc.s_min:
            raise ConfigError(f"s0={config.s0} below the boundary's sampled range")
    rows = [_boundary_table(bc, config.s0) for bc in boundaries]
    start, step = rows[0][0], rows[0][1]
    table = np.vstack([r[2] for r in rows])
    tops = np.array([r[3] for r in rows])
    payoffs = np.zeros((len(boundaries), config.n_paths))
    steps = np.full((len(boundaries), config.n_paths), -1, dtype=np.int64)
    nu = params.mu - 0.5 * params.sigma2
    bridge = config.max_mode is MaxMode.BRIDGE_SAMPLED
    for first, count, rng_z, rng_u in _streams(config.seed, _STREAM_STOPPING, config.n_paths):
        sl = slice(first, first + count)
        # the kernel writes into contiguous per-block buffers
        pay = np.zeros((len(boundaries), count))
        st = np.full((len(boundaries), count), -1, dtype=np.int64)
        _stopping_kernel(
            rng_z, rng_u, count, pay, st, math.log(config.x0), math.log(config.s0), nu,
            params.sigma, config.dt, config.n_steps, params.r, start, step, table, tops,
            bridge, config.check_paths,
        )
        payoffs[:, sl] = pay
        steps[:, sl] = st
    return StoppedPaths(payoffs, steps, config)


def simulate_stopped_value(
    config: McConfig, boundary: BoundaryCurve, params: ModelParams
) -> McEstimate:
    """E[e^{-r tau} R(X_tau, S_tau)] for tau = first monitoring time with X <= H(S)."""
    return simulate_paths(config, [boundary], params).estimate(0)


def sample_state(config: McConfig, params: ModelParams, times) -> tuple[np.ndarray, np.ndarray]:
    """Exact samples of (X_T, S_T) at each time, without stopping.

    The bridge-maximum law is exact for any step length, so one step per
    horizon segment suffices; ``config.dt`` is not used.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0.0) or np.any(times < 0.0):
        raise ConfigError("times must be nonnegative and increasing")
    lx = np.empty((len(times), config.n_paths))
    ls = np.empty_like(lx)
    nu = params.mu - 0.5 * params.sigma2
    for first, count, rng_z, rng_u in _streams(config.seed, _STREAM_HORIZON, config.n_paths):
        bx = np.empty((len(times), count))
        bs = np.empty_like(bx)
        _horizon_kernel(rng_z, rng_u, count, bx, bs, math.log(config.x0), math.log(config.s0),
                        nu, params.sigma, times)
        lx[:, first:first + count] = bx
        ls[:, first:first + count] = bs
    return np.exp(lx), np.exp(ls)


def transversality_diagnostic(
    config: McConfig, surface, params: ModelParams, horizons
) -> list[McEstimate]:
    """Per horizon T, an estimate of e^{-rT} E[w(X_T, S_T)]."""
    horizons = np.asarray(horizons, dtype=float)
    x, s = sample_state(config, params, horizons)
    out = []
    for i, t in enumerate(horizons):
        w = eval_w(np.minimum(x[i], s[i]), s[i], surface)
        out.append(summarize(math.exp(-params.r * t) * np.atleast_1d(w), f"exact state at T={t:g}"))
    return out


def discounted_terminal_mean(config: McConfig, params: ModelParams, horizon: float) -> McEstimate:
    """E[e^{-rT} X_T] by the same stepping as the stopping simulator; equals x0 e^{(mu - r)T}."""
    n_steps = int(round(horizon / config.dt))
    lx = np.empty(config.n_paths)
    nu = params.mu - 0.5 * params.sigma2
    for first, count, rng_z, _ in _streams(config.seed, _STREAM_TERMINAL, config.n_paths):
        out = np.empty(count)
        _terminal_kernel(rng_z, count, out, math.log(config.x0), nu, params.sigma, config.dt, n_steps)
        lx[first:first + count] = out
    return summarize(math.exp(-params.r * n_steps * config.dt) * np.exp(lx), "exact stepping")
