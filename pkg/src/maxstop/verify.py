"""End-to-end verification of the construction: VI checks, PDE oracle, Monte Carlo.

Each check produces a ``CheckResult``; ``run_verification`` returns them in a
fixed order so the first failure is well defined.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .boundary import BoundaryCurve, solve_with_asymptote
from .config import RunConfig
from .core import ModelParams, build_params
from .montecarlo import (
    McConfig,
    monitoring_bias_margin,
    simulate_paths,
    transversality_diagnostic,
)
from .pde import LcpGrid, boundary_at, solve_lcp
from .value import (
    asymptotic_coefficients,
    coefficients,
    eval_w,
    neumann_residual,
    vi_report,
)

# s-points where the contact boundary is compared with the ODE boundary
CONTACT_LEVELS = (0.5, 1.0, 2.0, 5.0)
# Neumann residual sample range: beyond s ~ 5 the finite-difference estimate
# of A' s^n + B' s^m loses accuracy as (s/H)^(n-m)
NEUMANN_S_RANGE = (0.01, 5.0)


@dataclass
class CheckResult:
    name: str
    status: str  # "pass" | "fail" | "skip"
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def line(self) -> str:
        return f"{self.status.upper():4s}  {self.name}: {self.detail}"


def resolve_level(level, params: ModelParams) -> float:
    return params.h_circ_inf if level == "optimal" else float(level)


class CurveCache:
    """Solve each asymptote once per run."""

    def __init__(self, params: ModelParams, controls):
        self.params = params
        self.controls = controls
        self._store = {}

    def get(self, level) -> BoundaryCurve:
        q = resolve_level(level, self.params)
        if q not in self._store:
            self._store[q] = solve_with_asymptote(q, self.params, self.controls)
        return self._store[q]


# ---------------------------------------------------------------------------
# individual checks
# ---------------------------------------------------------------------------


def smooth_fit_mismatch(curve: BoundaryCurve, s_values) -> float:
    """Largest value or slope jump of w across x = H(s), from the unscaled A(s), B(s)."""
    params = curve.params
    s_arr = np.asarray(s_values, dtype=float)
    a, b = coefficients(s_arr, curve)
    h = curve.h(s_arr)
    f = -np.expm1(-s_arr)
    val = a * h**params.n + b * h**params.m - (f / h - 1.0)
    slope = (params.n * a * h**params.n + params.m * b * h**params.m) / h + f / h**2
    scale = np.maximum(1.0, np.abs(f / h))
    return float(np.max(np.maximum(np.abs(val), np.abs(slope) * h) / scale))


def check_smooth_fit_and_neumann(curves: dict, n_samples: int = 50) -> CheckResult:
    s_vals = np.geomspace(*NEUMANN_S_RANGE, n_samples)
    worst_fit, worst_neu, where = 0.0, 0.0, ""
    for q, c in curves.items():
        fit = smooth_fit_mismatch(c, s_vals)
        neu = max(neumann_residual(float(s), c) for s in s_vals)
        if neu > worst_neu:
            where = f"h_inf={q:.4g}"
        worst_fit = max(worst_fit, fit)
        worst_neu = max(worst_neu, neu)
    ok = worst_fit < 1e-8 and worst_neu < 1e-6
    return CheckResult(
        "smooth-fit+neumann",
        "pass" if ok else "fail",
        f"max fit mismatch {worst_fit:.2e}, max normalised Neumann residual {worst_neu:.2e} ({where})",
    )


def check_negative(curve: BoundaryCurve, grid) -> CheckResult:
    rep = vi_report(curve, grid)
    wt = rep.witness("positivity")
    name = f"negativity h_inf={curve.h_inf:.4g}"
    if wt is None:
        return CheckResult(name, "fail", "no point with w < 0 on the grid")
    return CheckResult(name, "pass", f"w({wt.x:.4g}, {wt.s:.4g}) = {wt.w:.4g}")


def check_valid(curve: BoundaryCurve, grid) -> CheckResult:
    rep = vi_report(curve, grid)
    name = f"vi+positivity h_inf={curve.h_inf:.4g}"
    if rep.all_ok:
        return CheckResult(name, "pass", f"{grid.n_s}x{grid.n_x} grid clean")
    wt = rep.witnesses[0]
    return CheckResult(name, "fail", f"{wt.check} fails at x={wt.x:.4g}, s={wt.s:.4g}, w={wt.w:.4g}")


def pde_gap(lcp: LcpGrid, curve: BoundaryCurve) -> float:
    """Relative sup-norm gap on the analytic continuation region: max|w_h - w| / max|w|."""
    s = np.broadcast_to(lcp.s_slices[:, None], lcp.x_nodes.shape)
    w = eval_w(lcp.x_nodes, s, curve)
    cont = lcp.x_nodes > curve.h(s)
    return float(np.max(np.abs(lcp.values - w)[cont]) / np.max(np.abs(w[cont])))


def contact_offsets(lcp: LcpGrid, curve: BoundaryCurve, levels=CONTACT_LEVELS) -> list:
    """(PDE boundary - ODE boundary) / local cell width at each level."""
    out = []
    for s in levels:
        j = int(np.clip(np.searchsorted(lcp.s_slices, s), 0, len(lcp.s_slices) - 1))
        h = float(curve.h(s))
        out.append((boundary_at(lcp, s) - h) / lcp.cell_width(j, h))
    return out


def check_pde(params, curve, spec, gap_tol) -> CheckResult:
    t0 = time.perf_counter()
    lcp = solve_lcp(params, spec)
    gap = pde_gap(lcp, curve)
    offs = contact_offsets(lcp, curve)
    ok = gap <= gap_tol and all(abs(o) <= 1.0 for o in offs)
    return CheckResult(
        f"pde-oracle {spec.n_s}x{spec.n_x}",
        "pass" if ok else "fail",
        f"relative gap {gap:.3%} (tol {gap_tol:.0%}), contact offsets in cells "
        + ", ".join(f"{o:+.2f}" for o in offs)
        + f", {time.perf_counter() - t0:.1f}s",
    )


def check_mc_optimality(params, curves: dict, mc_cfg: McConfig) -> list:
    """H° estimate vs analytic w, and H° vs sub/super boundaries on common paths."""
    opt = curves["optimal"]
    sp = simulate_paths(mc_cfg, [opt, curves["sub"], curves["super"]], params)
    est = sp.estimate(0)
    w0 = float(eval_w(mc_cfg.x0, mc_cfg.s0, opt))
    margin = monitoring_bias_margin(w0, params, mc_cfg.dt)
    gap = abs(est.mean - w0)
    out = [CheckResult(
        "mc value at H°",
        "pass" if gap <= 3.0 * est.std_error + margin else "fail",
        f"estimate {est.mean:.5f} +- {est.std_error:.5f}, w = {w0:.5f}, "
        f"|gap| {gap:.5f} vs 3SE + margin {3 * est.std_error + margin:.5f}",
    )]
    for k, tag in ((1, "sub"), (2, "super")):
        d = sp.difference(0, k)
        other = sp.estimate(k)
        out.append(CheckResult(
            f"mc H° beats {tag} (h_inf={curves[tag].h_inf:.4g})",
            "pass" if d.mean >= -3.0 * d.std_error else "fail",
            f"{tag} estimate {other.mean:.5f}; difference {d.mean:+.5f} +- {d.std_error:.5f}",
        ))
    return out


def check_transversality(params, opt, low, mc_cfg, horizons, ratio, floor_horizons) -> list:
    diag = transversality_diagnostic(mc_cfg, opt, params, horizons)
    means = [e.mean for e in diag]
    decreasing = all(b < a for a, b in zip(means, means[1:]))
    final_ratio = means[-1] / means[0]
    out = [CheckResult(
        "transversality H°",
        "pass" if decreasing and final_ratio < ratio else "fail",
        "means " + ", ".join(f"T={t:g}: {m:.4f}" for t, m in zip(horizons, means))
        + f"; last/first = {final_ratio:.3f} (need < {ratio:g})",
    )]
    diag_low = transversality_diagnostic(mc_cfg, low, params, floor_horizons)
    floor = asymptotic_coefficients(low.h_inf, params)[0] * mc_cfg.x0 ** params.n
    ok = all(e.mean >= floor - 3.0 * e.std_error for e in diag_low)
    out.append(CheckResult(
        f"transversality floor h_inf={low.h_inf:.4g}",
        "pass" if ok else "fail",
        f"floor A_inf x0^n = {floor:.4f}; means "
        + ", ".join(f"T={t:g}: {e.mean:.4f}+-{e.std_error:.4f}" for t, e in zip(floor_horizons, diag_low)),
    ))
    return out


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


def run_verification(cfg: RunConfig, log: Optional[Callable[[str], None]] = None) -> list:
    log = log or (lambda _: None)
    params = build_params(cfg.params.mu, cfg.params.sigma, cfg.params.r)
    cache = CurveCache(params, cfg.controls)
    results = []

    def add(res):
        results.extend(res if isinstance(res, list) else [res])
        for r in res if isinstance(res, list) else [res]:
            log(r.line())

    for lvl in cfg.vi.negative_h_inf:
        add(check_negative(cache.get(lvl), cfg.vi.grid))
    for lvl in cfg.vi.valid_h_inf:
        add(check_valid(cache.get(lvl), cfg.vi.grid))
    levels = list(cfg.vi.negative_h_inf) + list(cfg.vi.valid_h_inf)
    add(check_smooth_fit_and_neumann({resolve_level(l, params): cache.get(l) for l in levels}))

    if cfg.pde.enabled:
        add(check_pde(params, cache.get("optimal"), cfg.pde.spec, cfg.pde.gap_tol))
    else:
        add(CheckResult("pde-oracle", "skip", "disabled in config"))

    if cfg.mc.enabled:
        curves = {
            "optimal": cache.get("optimal"),
            "sub": cache.get(cfg.mc.sub_h_inf),
            "super": cache.get(cfg.mc.super_h_inf),
        }
        add(check_mc_optimality(params, curves, cfg.mc.config))
        tcfg = replace(cfg.mc.config, n_paths=cfg.mc.transversality_paths)
        add(check_transversality(
            params, cache.get("optimal"), cache.get(cfg.mc.transversality_h_inf), tcfg,
            cfg.mc.horizons, cfg.mc.transversality_ratio, cfg.mc.floor_horizons,
        ))
    else:
        add(CheckResult("monte-carlo", "skip", "disabled in config"))
    return results


def first_failure(results) -> Optional[CheckResult]:
    for r in results:
        if r.status == "fail":
            return r
    return None
