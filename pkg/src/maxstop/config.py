"""Run configuration: an INI file with flat key = value sections.

Every section and key is optional except ``[params]`` with ``mu``, ``r`` and
one of ``sigma`` / ``sigma2``. Unknown sections or keys are rejected so that
typos fail loudly.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .boundary import Controls
from .errors import ConfigError
from .montecarlo import MaxMode, McConfig
from .pde import LcpSpec
from .value import GridSpec

REFERENCE_CONFIG = """\
[params]
mu = 0.05
sigma2 = 0.2
r = 0.25

[boundary]
# 'default' = 0.25, 0.5, 0.75, 1 x H°_inf, then two levels between H°_inf and G_inf, then G_inf
q_inf = default
# optional s:q starts above G_inf (decreasing curves), e.g. 0.5:0.6, 2.0:0.45
upper_starts =
s_grid_min = 1e-3
s_grid_max = 30
s_grid_n = 300

[value]
h_inf = optimal
s_values = 0.1, 0.5, 1, 2, 5, 10
n_x = 50

[vi]
s_min = 1e-3
s_max = 30
n_s = 400
n_x = 400
x_low_ratio = 1e-4
negative_h_inf = 0.30, 0.35, 0.40
valid_h_inf = 0.13, optimal

[pde]
enabled = true
n_s = 200
n_x = 200
s_min = 0.01
s_max = 20
x_min_ratio = 1e-3
gap_tol = 0.02

[mc]
enabled = true
x0 = 0.5
s0 = 1.0
dt = 1e-3
t_max = 50
n_paths = 100000
seed = 20240607
max_mode = bridge
sub_h_inf = 0.13
super_h_inf = 0.35
transversality_paths = 100000
# decay of e^{-rT} E[w] for H°: last horizon must fall below ratio x first
horizons = 5, 10, 20, 40
transversality_ratio = 0.1
# floor check for a boundary below H°; the integrand is close to log-normal with
# log-variance n^2 sigma^2 T (~14 at T = 20), so beyond T ~ 10 a sample mean over
# 1e5 paths typically falls short of the true mean
transversality_h_inf = 0.13
floor_horizons = 5, 10

[output]
dir = out
"""


def _floats(text: str) -> list:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _levels(text: str) -> list:
    """Comma list of floats or the word 'optimal' (H°_inf)."""
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        out.append("optimal" if tok.lower() == "optimal" else float(tok))
    return out


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class ParamsBlock:
    mu: float
    sigma: float
    r: float


@dataclass(frozen=True)
class BoundaryBlock:
    q_inf: Optional[list] = None  # None means the default family
    upper_starts: list = field(default_factory=list)
    s_grid_min: float = 1e-3
    s_grid_max: float = 30.0
    s_grid_n: int = 300


@dataclass(frozen=True)
class ValueBlock:
    h_inf: object = "optimal"
    s_values: list = field(default_factory=lambda: [0.1, 0.5, 1.0, 2.0, 5.0, 10.0])
    n_x: int = 50


@dataclass(frozen=True)
class ViBlock:
    grid: GridSpec = GridSpec()
    negative_h_inf: list = field(default_factory=lambda: [0.30, 0.35, 0.40])
    valid_h_inf: list = field(default_factory=lambda: [0.13, "optimal"])


@dataclass(frozen=True)
class PdeBlock:
    enabled: bool = True
    spec: LcpSpec = LcpSpec()
    gap_tol: float = 0.02


@dataclass(frozen=True)
class McBlock:
    enabled: bool = True
    config: McConfig = McConfig()
    sub_h_inf: float = 0.13
    super_h_inf: float = 0.35
    transversality_paths: int = 100_000
    horizons: list = field(default_factory=lambda: [5.0, 10.0, 20.0, 40.0])
    transversality_ratio: float = 0.1
    transversality_h_inf: float = 0.13
    floor_horizons: list = field(default_factory=lambda: [5.0, 10.0])


@dataclass(frozen=True)
class RunConfig:
    params: ParamsBlock
    boundary: BoundaryBlock = BoundaryBlock()
    value: ValueBlock = ValueBlock()
    vi: ViBlock = ViBlock()
    pde: PdeBlock = PdeBlock()
    mc: McBlock = McBlock()
    out_dir: Path = Path("out")
    controls: Controls = Controls()

    def with_overrides(self, out_dir=None, seed=None) -> "RunConfig":
        cfg = self
        if out_dir is not None:
            cfg = replace(cfg, out_dir=Path(out_dir))
        if seed is not None:
            cfg = replace(cfg, mc=replace(cfg.mc, config=replace(cfg.mc.config, seed=int(seed))))
        return cfg


_ALLOWED = {
    "params": {"mu", "sigma", "sigma2", "r"},
    "boundary": {"q_inf", "upper_starts", "s_grid_min", "s_grid_max", "s_grid_n"},
    "value": {"h_inf", "s_values", "n_x"},
    "vi": {"s_min", "s_max", "n_s", "n_x", "x_low_ratio", "negative_h_inf", "valid_h_inf"},
    "pde": {"enabled", "n_s", "n_x", "s_min", "s_max", "x_min_ratio", "gap_tol"},
    "mc": {"enabled", "x0", "s0", "dt", "t_max", "n_paths", "seed", "max_mode", "sub_h_inf",
           "super_h_inf", "transversality_paths", "horizons", "transversality_ratio",
           "transversality_h_inf", "floor_horizons"},
    "output": {"dir"},
}


def _get(sec, key, conv, default):
    if sec is None or key not in sec:
        return default
    try:
        return conv(sec[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {sec.name}.{key}: {exc}") from None


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    for name in cp.sections():
        if name not in _ALLOWED:
            raise ConfigError(f"unknown section [{name}]")
        unknown = set(cp[name]) - _ALLOWED[name]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    if "params" not in cp:
        raise ConfigError("missing section [params]")
    ps = cp["params"]
    for key in ("mu", "r"):
        if key not in ps:
            raise ConfigError(f"missing key params.{key}")
    if ("sigma" in ps) == ("sigma2" in ps):
        raise ConfigError("give exactly one of params.sigma and params.sigma2")
    mu = _get(ps, "mu", float, None)
    r = _get(ps, "r", float, None)
    if "sigma" in ps:
        sigma = _get(ps, "sigma", float, None)
    else:
        s2 = _get(ps, "sigma2", float, None)
        if s2 < 0.0:
            raise ConfigError("params.sigma2 must be nonnegative")
        sigma = math.sqrt(s2)
    params = ParamsBlock(mu, sigma, r)

    b = cp["boundary"] if "boundary" in cp else None
    q_raw = _get(b, "q_inf", str, "default").strip()
    boundary = BoundaryBlock(
        q_inf=None if q_raw.lower() == "default" else _levels(q_raw),
        upper_starts=_get(b, "upper_starts", _pairs, []),
        s_grid_min=_get(b, "s_grid_min", float, 1e-3),
        s_grid_max=_get(b, "s_grid_max", float, 30.0),
        s_grid_n=_get(b, "s_grid_n", int, 300),
    )

    v = cp["value"] if "value" in cp else None
    h_val = _get(v, "h_inf", _levels, ["optimal"])
    if len(h_val) != 1:
        raise ConfigError("value.h_inf takes a single level")
    value = ValueBlock(
        h_inf=h_val[0],
        s_values=_get(v, "s_values", _floats, ValueBlock().s_values),
        n_x=_get(v, "n_x", int, 50),
    )

    vs = cp["vi"] if "vi" in cp else None
    g0 = GridSpec()
    vi = ViBlock(
        grid=GridSpec(
            s_min=_get(vs, "s_min", float, g0.s_min),
            s_max=_get(vs, "s_max", float, g0.s_max),
            n_s=_get(vs, "n_s", int, g0.n_s),
            n_x=_get(vs, "n_x", int, g0.n_x),
            x_low_ratio=_get(vs, "x_low_ratio", float, g0.x_low_ratio),
        ),
        negative_h_inf=_get(vs, "negative_h_inf", _levels, ViBlock().negative_h_inf),
        valid_h_inf=_get(vs, "valid_h_inf", _levels, ViBlock().valid_h_inf),
    )

    pd = cp["pde"] if "pde" in cp else None
    l0 = LcpSpec()
    pde = PdeBlock(
        enabled=_get(pd, "enabled", _bool, True),
        spec=LcpSpec(
            n_s=_get(pd, "n_s", int, l0.n_s),
            n_x=_get(pd, "n_x", int, l0.n_x),
            s_min=_get(pd, "s_min", float, l0.s_min),
            s_max=_get(pd, "s_max", float, l0.s_max),
            x_min_ratio=_get(pd, "x_min_ratio", float, l0.x_min_ratio),
        ),
        gap_tol=_get(pd, "gap_tol", float, 0.02),
    )

    ms = cp["mc"] if "mc" in cp else None
    m0 = McConfig()
    mb = McBlock()
    try:
        mode = MaxMode(_get(ms, "max_mode", str, m0.max_mode.value).strip().lower())
    except ValueError:
        raise ConfigError("mc.max_mode must be 'bridge' or 'grid'") from None
    mc = McBlock(
        enabled=_get(ms, "enabled", _bool, True),
        config=McConfig(
            x0=_get(ms, "x0", float, m0.x0),
            s0=_get(ms, "s0", float, m0.s0),
            dt=_get(ms, "dt", float, m0.dt),
            t_max=_get(ms, "t_max", float, m0.t_max),
            n_paths=_get(ms, "n_paths", int, m0.n_paths),
            seed=_get(ms, "seed", int, m0.seed),
            max_mode=mode,
        ),
        sub_h_inf=_get(ms, "sub_h_inf", float, mb.sub_h_inf),
        super_h_inf=_get(ms, "super_h_inf", float, mb.super_h_inf),
        transversality_paths=_get(ms, "transversality_paths", int, mb.transversality_paths),
        horizons=_get(ms, "horizons", _floats, mb.horizons),
        transversality_ratio=_get(ms, "transversality_ratio", float, mb.transversality_ratio),
        transversality_h_inf=_get(ms, "transversality_h_inf", float, mb.transversality_h_inf),
        floor_horizons=_get(ms, "floor_horizons", _floats, mb.floor_horizons),
    )

    out = cp["output"] if "output" in cp else None
    out_dir = Path(_get(out, "dir", str, "out"))
    return RunConfig(params, boundary, value, vi, pde, mc, out_dir)


def _pairs(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        s, _, q = tok.partition(":")
        if not q:
            raise ValueError(f"expected s:q, got {tok!r}")
        out.append((float(s), float(q)))
    return out


def load_config(path=None) -> RunConfig:
    """Parse ``path``, or the reference configuration when ``path`` is None."""
    if path is None:
        return parse_config(REFERENCE_CONFIG)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
