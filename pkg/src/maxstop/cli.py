"""Command-line runner: ``python -m maxstop <command> [--config PATH] [--out DIR] [--seed N]``.

Without ``--config`` the built-in reference configuration is used
(``python -m maxstop config`` prints it). Every command writes only inside
the output directory; floats are written with ``repr`` so reruns are
byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .boundary import CSV_COLUMNS, curve_family, default_asymptotes
from .config import REFERENCE_CONFIG, RunConfig, load_config
from .core import build_params, g_curve, zeta
from .errors import MaxstopError
from .montecarlo import monitoring_bias_margin, simulate_paths, transversality_diagnostic
from .pde import solve_lcp, write_boundary_csv, write_values_csv
from .value import coefficient_table, eval_w, value_table
from .verify import CurveCache, first_failure, pde_gap, resolve_level, run_verification

_HELP = {
    "params": "Print m, n, G_inf, H°_inf and q_dagger for [params]. Writes nothing.",
    "boundary": (
        "Solve the boundary family.\n"
        "  boundary_family.csv   s, q, H, G(s), zeta(s), curve_id, q_inf (one row per sample;\n"
        "                        q_inf is empty for curves started above G_inf)\n"
        "  boundary_curves.csv   curve_id, q_inf, is_optimal, is_separatrix, separatrix_delta,\n"
        "                        s_anchor, asymptote_error, terminal_class, error\n"
        "  boundary_overlays.csv s, G(s), zeta(s), G_inf, H_circ_inf\n"
        "Exit 1 if the curve with q_inf = H°_inf fails."
    ),
    "value": (
        "Value function for [value] h_inf.\n"
        "  value_coefficients.csv  s, A, B\n"
        "  value_surface.csv       x, s, w, region_flag (stop | wait)"
    ),
    "verify": (
        "Run the VI, Neumann, PDE and Monte-Carlo checks; one PASS/FAIL/SKIP line each.\n"
        "  verify_report.txt  the same lines\n"
        "Exit 0 iff every enabled check passes; otherwise exit 1 naming the first failure."
    ),
    "pde": (
        "Solve the discrete obstacle problem on the [pde] grid.\n"
        "  pde_values.csv    x, s, w, contact_flag\n"
        "  pde_boundary.csv  s, H_contact, cell_width, H_analytic"
    ),
    "mc": (
        "Monte-Carlo estimates at (x0, s0) for H°, sub_h_inf and super_h_inf on common paths.\n"
        "  mc_summary.txt          key = value lines (mean, se, n, dt, seed per rule)\n"
        "  mc_transversality.csv   h_inf, T, mean, se  (e^{-rT} E[w(X_T, S_T)])"
    ),
    "config": "Print the reference configuration file.",
}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(row[k]) for k in header])


def _out_dir(cfg: RunConfig) -> Path:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return cfg.out_dir


def _params(cfg: RunConfig):
    return build_params(cfg.params.mu, cfg.params.sigma, cfg.params.r)


def cmd_params(cfg: RunConfig) -> int:
    p = _params(cfg)
    rows = [("mu", p.mu), ("sigma", p.sigma), ("sigma2", p.sigma2), ("r", p.r), ("m", p.m),
            ("n", p.n), ("G_inf", p.g_inf), ("H_circ_inf", p.h_circ_inf), ("q_dagger", p.q_dagger)]
    for k, v in rows:
        print(f"{k:10s} {v:.16g}")
    return 0


def cmd_boundary(cfg: RunConfig) -> int:
    p = _params(cfg)
    out = _out_dir(cfg)
    b = cfg.boundary
    levels = default_asymptotes(p) if b.q_inf is None else [resolve_level(q, p) for q in b.q_inf]
    grid = np.geomspace(b.s_grid_min, b.s_grid_max, b.s_grid_n)
    fam = curve_family(levels, p, cfg.controls, b.upper_starts, grid)
    _write_csv(out / "boundary_family.csv", list(CSV_COLUMNS), fam.rows)

    meta_cols = ["curve_id", "q_inf", "is_optimal", "is_separatrix", "separatrix_delta",
                 "s_anchor", "asymptote_error", "terminal_class", "error"]
    meta = []
    optimal_failed = False
    for mb in fam.members:
        c = mb.curve
        row = dict.fromkeys(meta_cols)
        row.update(curve_id=mb.curve_id, q_inf=mb.q_inf, error=mb.error)
        if c is not None:
            row.update(is_optimal=c.is_optimal, is_separatrix=c.is_separatrix,
                       separatrix_delta=c.separatrix_delta, s_anchor=c.s_anchor,
                       asymptote_error=c.asymptote_error,
                       terminal_class=c.q_path.terminal_class.name)
        elif mb.path is not None:
            row.update(is_optimal=False, is_separatrix=False,
                       terminal_class=mb.path.terminal_class.name)
        if mb.q_inf is not None and abs(mb.q_inf - p.h_circ_inf) < 1e-6 and c is None:
            optimal_failed = True
        meta.append(row)
    _write_csv(out / "boundary_curves.csv", meta_cols, meta)

    overlay = [{"s": s, "G(s)": g, "zeta(s)": zeta(float(s), p), "G_inf": p.g_inf,
                "H_circ_inf": p.h_circ_inf} for s, g in zip(grid, g_curve(grid, p))]
    _write_csv(out / "boundary_overlays.csv", ["s", "G(s)", "zeta(s)", "G_inf", "H_circ_inf"], overlay)

    n_ok = sum(mb.ok for mb in fam.members)
    print(f"{n_ok}/{len(fam.members)} curves solved; written to {out}")
    for mb in fam.members:
        if not mb.ok:
            print(f"curve {mb.curve_id} (q_inf={mb.q_inf}): {mb.error}", file=sys.stderr)
    if optimal_failed:
        print("error: the optimal curve failed", file=sys.stderr)
        return 1
    return 0


def cmd_value(cfg: RunConfig) -> int:
    p = _params(cfg)
    out = _out_dir(cfg)
    curve = CurveCache(p, cfg.controls).get(cfg.value.h_inf)
    s_vals = np.asarray(cfg.value.s_values, dtype=float)
    _write_csv(out / "value_coefficients.csv", ["s", "A", "B"], coefficient_table(curve, s_vals))
    _write_csv(out / "value_surface.csv", ["x", "s", "w", "region_flag"],
               value_table(curve, s_vals, cfg.value.n_x))
    print(f"value function for h_inf={curve.h_inf!r} written to {out}")
    return 0


def cmd_pde(cfg: RunConfig) -> int:
    p = _params(cfg)
    out = _out_dir(cfg)
    curve = CurveCache(p, cfg.controls).get("optimal")
    t0 = time.perf_counter()
    lcp = solve_lcp(p, cfg.pde.spec)
    write_values_csv(lcp, out / "pde_values.csv")
    write_boundary_csv(lcp, out / "pde_boundary.csv", curve.h(lcp.s_slices))
    print(f"{cfg.pde.spec.n_s}x{cfg.pde.spec.n_x} grid, {lcp.sweeps} sweeps, "
          f"{time.perf_counter() - t0:.2f}s; relative gap to w: {pde_gap(lcp, curve):.4%}")
    return 0


def cmd_mc(cfg: RunConfig) -> int:
    p = _params(cfg)
    out = _out_dir(cfg)
    cache = CurveCache(p, cfg.controls)
    mc = cfg.mc
    rules = [("optimal", cache.get("optimal")), ("sub", cache.get(mc.sub_h_inf)),
             ("super", cache.get(mc.super_h_inf))]
    sp = simulate_paths(mc.config, [c for _, c in rules], p)
    w0 = float(eval_w(mc.config.x0, mc.config.s0, rules[0][1]))
    lines = [f"x0 = {mc.config.x0!r}", f"s0 = {mc.config.s0!r}", f"max_mode = {mc.config.max_mode.value}",
             f"t_max = {mc.config.t_max!r}", f"w_analytic = {w0!r}",
             f"monitoring_margin = {monitoring_bias_margin(w0, p, mc.config.dt)!r}"]
    for k, (tag, c) in enumerate(rules):
        rep = sp.estimate(k).as_report(mc.config)
        lines.append(f"{tag}.h_inf = {c.h_inf!r}")
        lines.extend(f"{tag}.{key} = {_fmt(v)}" for key, v in rep.items())
        lines.append(f"{tag}.stopped_fraction = {float(sp.stopped_fraction[k])!r}")
        if k:
            d = sp.difference(0, k)
            lines.append(f"optimal_minus_{tag}.mean = {d.mean!r}")
            lines.append(f"optimal_minus_{tag}.se = {d.std_error!r}")
    (out / "mc_summary.txt").write_text("\n".join(lines) + "\n")

    tcfg = replace(mc.config, n_paths=mc.transversality_paths)
    rows = []
    for c, hz in ((rules[0][1], mc.horizons), (cache.get(mc.transversality_h_inf), mc.floor_horizons)):
        for t, e in zip(hz, transversality_diagnostic(tcfg, c, p, hz)):
            rows.append({"h_inf": c.h_inf, "T": float(t), "mean": e.mean, "se": e.std_error})
    _write_csv(out / "mc_transversality.csv", ["h_inf", "T", "mean", "se"], rows)
    print("\n".join(lines))
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    results = run_verification(cfg, log=print)
    (out / "verify_report.txt").write_text("\n".join(r.line() for r in results) + "\n")
    bad = first_failure(results)
    if bad is not None:
        print(f"verification failed: first failed check is '{bad.name}'", file=sys.stderr)
        return 1
    print("all checks passed")
    return 0


def cmd_config(cfg: RunConfig) -> int:
    print(REFERENCE_CONFIG, end="")
    return 0


COMMANDS = {
    "params": cmd_params,
    "boundary": cmd_boundary,
    "value": cmd_value,
    "verify": cmd_verify,
    "pde": cmd_pde,
    "mc": cmd_mc,
    "config": cmd_config,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="maxstop", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=_HELP[name].splitlines()[0], description=_HELP[name],
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--config", type=Path, help="INI config file (default: reference config)")
        sp.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
        sp.add_argument("--seed", type=int, help="Monte-Carlo seed (overrides [mc] seed)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(out_dir=args.out, seed=args.seed)
        return COMMANDS[args.command](cfg)
    except MaxstopError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
