"""Finite-difference obstacle-problem solver on the wedge {0 < x <= s}.

This is an independent check on the ODE construction: it never touches the
boundary ODE. Each s-slice carries the stationary operator

    L w = 0.5 sigma^2 x^2 w_xx + mu x w_x - r w,

which in y = ln x has constant coefficients, so slices use a uniform grid in y
from x_min(s) to s. Slices are coupled only through the diagonal condition
w_s(s, s) = 0, discretised as

    w_j(s_j) = w_{j+1}(s_j),

i.e. the right-end Dirichlet value of slice j is read off slice j+1. The
coupling is one-directional, so a top-down sweep solves the whole grid; the
sweep is repeated until the sup-norm change is below tolerance.

The top slice needs its own closure. Once F(s) has saturated the problem no
longer depends on s, and every constant boundary satisfies the diagonal
condition; the one that gives a bounded, transversal value has no x^n
component. The top slice therefore uses the Robin condition x w_x = m w at
x = s_max.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import F, ModelParams, g_curve
from .errors import ConfigError, EmptyContact, NoConvergence


@dataclass(frozen=True)
class LcpSpec:
    n_s: int = 200
    n_x: int = 200
    s_min: float = 0.01
    s_max: float = 20.0
    x_min_ratio: float = 1e-3  # x_min(s) = ratio * G(s)
    tol: float = 1e-10
    max_sweeps: int = 10_000
    peclet_max: float = 2.0

    def __post_init__(self):
        if self.n_s < 2 or self.n_x < 4:
            raise ConfigError("need at least 2 slices and 4 x-nodes per slice")
        if not 0.0 < self.s_min < self.s_max:
            raise ConfigError("need 0 < s_min < s_max")
        if not 0.0 < self.x_min_ratio < 1.0:
            raise ConfigError("x_min_ratio must lie in ]0, 1[")
        # centred drift loses the M-matrix sign pattern above cell Peclet 2
        if not 0.0 < self.peclet_max <= 2.0:
            raise ConfigError("peclet_max must lie in ]0, 2]")

    def s_values(self) -> np.ndarray:
        return np.geomspace(self.s_min, self.s_max, self.n_s)


@dataclass
class LcpGrid:
    s_slices: np.ndarray  # (J,)
    x_nodes: np.ndarray  # (J, N): row j is geometric from x_min(s_j) to s_j
    values: np.ndarray  # (J, N)
    obstacle: np.ndarray  # (J, N)
    residual: np.ndarray  # (J, N): -L_h w at interior nodes, 0 at boundary nodes
    contact_mask: np.ndarray  # (J, N) bool
    extracted_boundary: np.ndarray  # (J,), nan where a slice has no contact
    sweeps: int
    final_change: float
    spec: LcpSpec = field(repr=False)

    @property
    def dy(self) -> np.ndarray:
        return np.log(self.x_nodes[:, 1] / self.x_nodes[:, 0])

    def cell_width(self, j: int, x: float) -> float:
        """Width of the x-cell at level x on slice j (geometric grid)."""
        return float(x * np.expm1(self.dy[j]))


# ---------------------------------------------------------------------------
# one slice
# ---------------------------------------------------------------------------


def operator_bands(params: ModelParams, dy: float, peclet_max: float = 2.0):
    """Constant (sub, diag, super) of -L_h on a uniform y-grid.

    Drift is centred unless the cell Peclet number exceeds ``peclet_max``,
    in which case it is upwinded.
    """
    diff = 0.5 * params.sigma2
    drift = params.mu - 0.5 * params.sigma2
    peclet = abs(drift) * dy / diff
    if peclet <= peclet_max:
        lo = diff / dy**2 - drift / (2.0 * dy)
        up = diff / dy**2 + drift / (2.0 * dy)
    elif drift > 0.0:
        lo = diff / dy**2
        up = diff / dy**2 + drift / dy
    else:
        lo = diff / dy**2 - drift / dy
        up = diff / dy**2
    diag = lo + up + params.r
    return -lo, diag, -up


def brennan_schwartz(a, b, c, d, obstacle):
    """Solve the tridiagonal LCP  M w >= d, w >= obstacle, complementary,
    for an M-matrix whose contact set is an interval at the low-index end.

    Row i reads a[i] w[i-1] + b[i] w[i] + c[i] w[i+1]; a[0] and c[-1] are
    ignored. Elimination runs from the top index down, then substitution
    runs upward with projection onto the obstacle.
    """
    n = len(b)
    bp = np.empty(n)
    dp = np.empty(n)
    bp[-1] = b[-1]
    dp[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        ratio = c[i] / bp[i + 1]
        bp[i] = b[i] - ratio * a[i + 1]
        dp[i] = d[i] - ratio * dp[i + 1]
    w = np.empty(n)
    w[0] = max(obstacle[0], dp[0] / bp[0])
    for i in range(1, n):
        w[i] = max(obstacle[i], (dp[i] - a[i] * w[i - 1]) / bp[i])
    return w


def solve_slice(params, x, obstacle, right, dy, peclet_max=2.0):
    """Obstacle problem on one slice.

    Node 0 is Dirichlet at the obstacle. ``right`` is either ('dirichlet', v)
    or ('robin', k) for y-derivative w_y = k w at the last node.
    """
    n = len(x)
    lo, di, up = operator_bands(params, dy, peclet_max)
    a = np.full(n, lo)
    b = np.full(n, di)
    c = np.full(n, up)
    d = np.zeros(n)
    lower = obstacle.copy()
    # Dirichlet at node 0: the row is w0 = R0
    a[0], b[0], c[0], d[0] = 0.0, 1.0, 0.0, obstacle[0]
    kind, val = right
    if kind == "dirichlet":
        a[-1], b[-1], c[-1], d[-1] = 0.0, 1.0, 0.0, val
        lower[-1] = -np.inf
    elif kind == "robin":
        # ghost node from (w_{N+1} - w_{N-1}) / (2 dy) = k w_N, folded into the operator row
        a[-1] = lo + up
        b[-1] = di + up * 2.0 * dy * val
        c[-1] = 0.0
    else:
        raise ValueError(f"unknown right boundary kind {kind!r}")
    return brennan_schwartz(a, b, c, d, lower), (a, b, c, d)


def _interp_cubic_y(x_row, w_row, x_target):
    """Four-point Lagrange interpolation in y = ln x on a uniform y-grid."""
    y0 = math.log(x_row[0])
    dy = math.log(x_row[1] / x_row[0])
    t = (math.log(x_target) - y0) / dy
    n = len(x_row)
    i = min(max(int(math.floor(t)) - 1, 0), n - 4)
    ts = np.arange(i, i + 4, dtype=float)
    total = 0.0
    for k in range(4):
        lk = 1.0
        for m in range(4):
            if m != k:
                lk *= (t - ts[m]) / (ts[k] - ts[m])
        total += lk * w_row[i + k]
    return total


def solve_lcp(params: ModelParams, spec: LcpSpec = LcpSpec()) -> LcpGrid:
    s = spec.s_values()
    if math.exp(-spec.s_max) >= 1e-8:
        raise ConfigError(f"s_max={spec.s_max} too small: need 1 - F(s_max) < 1e-8")
    n_s, n_x = len(s), spec.n_x
    x_min = spec.x_min_ratio * g_curve(s, params)
    x = np.exp(np.linspace(np.log(x_min), np.log(s), n_x, axis=1))
    x[:, -1] = s
    dy = np.log(s / x_min) / (n_x - 1)
    obstacle = np.maximum(F(s)[:, None] / x - 1.0, 0.0)

    values = obstacle.copy()
    systems = [None] * n_s
    change = math.inf
    sweeps = 0
    while sweeps < spec.max_sweeps:
        sweeps += 1
        change = 0.0
        for j in range(n_s - 1, -1, -1):
            if j == n_s - 1:
                right = ("robin", params.m)
            else:
                right = ("dirichlet", _interp_cubic_y(x[j + 1], values[j + 1], s[j]))
            w, systems[j] = solve_slice(params, x[j], obstacle[j], right, dy[j], spec.peclet_max)
            change = max(change, float(np.max(np.abs(w - values[j]))))
            values[j] = w
        if change <= spec.tol:
            break
    else:
        raise NoConvergence(f"no fixed point after {spec.max_sweeps} sweeps", change)

    residual = np.zeros_like(values)
    for j, (a, b, c, d) in enumerate(systems):
        w = values[j]
        r = b * w - d
        r[1:] += a[1:] * w[:-1]
        r[:-1] += c[:-1] * w[1:]
        r[0] = 0.0
        if j != n_s - 1:
            r[-1] = 0.0
        residual[j] = r
    contact = values <= obstacle + 1e-12 * np.maximum(1.0, obstacle)
    contact[:, -1] &= False
    grid = LcpGrid(
        s_slices=s,
        x_nodes=x,
        values=values,
        obstacle=obstacle,
        residual=residual,
        contact_mask=contact,
        extracted_boundary=np.full(n_s, np.nan),
        sweeps=sweeps,
        final_change=change,
        spec=spec,
    )
    grid.extracted_boundary = boundary_from_contact(grid, strict=False)
    return grid


def boundary_from_contact(lcp: LcpGrid, strict: bool = True) -> np.ndarray:
    """Per-slice free-boundary estimate.

    Starts from the largest contact node k and refines inside [x_k, x_{k+1}]
    using smooth fit: above the boundary w - R grows like (x - H)^2, so
    sqrt(w - R) is linear in x and its zero is extrapolated from nodes k+1,
    k+2. With ``strict`` a slice without contact raises ``EmptyContact``;
    otherwise it yields nan.
    """
    out = np.full(len(lcp.s_slices), np.nan)
    empty = []
    for j in range(len(lcp.s_slices)):
        idx = np.flatnonzero(lcp.contact_mask[j])
        if idx.size == 0:
            empty.append(j)
            continue
        k = int(idx[-1])
        x = lcp.x_nodes[j]
        out[j] = x[k]
        if k + 2 < len(x):
            g1 = math.sqrt(max(lcp.values[j, k + 1] - lcp.obstacle[j, k + 1], 0.0))
            g2 = math.sqrt(max(lcp.values[j, k + 2] - lcp.obstacle[j, k + 2], 0.0))
            if g2 > g1:
                h = x[k + 1] - g1 * (x[k + 2] - x[k + 1]) / (g2 - g1)
                out[j] = min(max(h, x[k]), x[k + 1])
    if strict and empty:
        raise EmptyContact(f"no stopped node on slices {empty}")
    return out


def boundary_at(lcp: LcpGrid, s: float) -> float:
    """Extracted boundary interpolated linearly in s between slices."""
    b = lcp.extracted_boundary
    ok = ~np.isnan(b)
    return float(np.interp(s, lcp.s_slices[ok], b[ok]))


def complementarity_gap(lcp: LcpGrid) -> float:
    """max over nodes of min(|residual|, w - R): zero for an exact discrete solution."""
    inner = np.ones_like(lcp.values, dtype=bool)
    inner[:, 0] = False
    inner[:-1, -1] = False
    gap = np.minimum(np.abs(lcp.residual), lcp.values - lcp.obstacle)
    return float(np.max(gap[inner]))


def write_values_csv(lcp: LcpGrid, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "s", "w", "contact_flag"])
        for j, s in enumerate(lcp.s_slices):
            for xi, wi, ci in zip(lcp.x_nodes[j], lcp.values[j], lcp.contact_mask[j]):
                wr.writerow([repr(float(xi)), repr(float(s)), repr(float(wi)), int(ci)])


def write_boundary_csv(lcp: LcpGrid, path, analytic: Optional[np.ndarray] = None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        header = ["s", "H_contact", "cell_width"] + (["H_analytic"] if analytic is not None else [])
        wr.writerow(header)
        for j, s in enumerate(lcp.s_slices):
            hb = lcp.extracted_boundary[j]
            cw = lcp.cell_width(j, hb) if np.isfinite(hb) else float("nan")
            row = [repr(float(s)), repr(float(hb)), repr(cw)]
            if analytic is not None:
                row.append(repr(float(analytic[j])))
            wr.writerow(row)
