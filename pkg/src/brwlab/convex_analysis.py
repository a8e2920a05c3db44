"""Numerical convex duality for spreading-speed calculations.

This module supplies the convex machinery everything else composes:
conjugates (Legendre-Fenchel transforms) computed by bracketed
golden-section maximization, the sweep operation that replaces positive
values by +inf, lower convex envelopes of pairs of functions built from
a monotone-chain hull, and the two speed functionals (zero crossing of
a rate function, infimum of cumulant-to-tilt ratios).

Infinities are first class: +inf marks points outside an effective
domain, comparisons treat it as absorbing, and values are never NaN.
Arithmetic that could produce NaN (inf - inf) is masked before it
happens.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, ToleranceError

# Tolerances used across the package.
TAU_CVX = 1e-8            # discrete convexity slack (relative)
TAU_DUAL = 1e-7           # conjugate minimum vs -f(0)
TAU_ROOT = 1e-7           # residual of tilt * speed - cumulant(tilt)
TAU_SPEED_ANALYTIC = 1e-6  # speed-formula agreement, closed-form cumulants
TAU_SPEED_GRID = 1e-4     # speed-formula agreement, grid-backed cumulants

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_THETA_CAP = 2.0 ** 48    # beyond this the conjugate is treated as +inf


@dataclass(frozen=True)
class GridSpec:
    """Uniform evaluation grid [lo, hi] with the given step."""

    lo: float
    hi: float
    step: float = 1e-3

    def abscissae(self) -> np.ndarray:
        n = max(1, int(round((self.hi - self.lo) / self.step)))
        return self.lo + self.step * np.arange(n + 1)


@dataclass(frozen=True)
class EvaluableFunction:
    """A real function with extended-real values on a grid, plus an optional rule.

    ``xs``/``ys`` hold the representation grid: strictly increasing
    abscissae with values where +inf encodes "outside the effective
    domain" and NaN is forbidden.  When ``rule`` is present it is the
    authoritative (vectorized) evaluation; the grid is then a sampled
    view used for window decisions and CSV export.  Without a rule,
    evaluation interpolates the grid linearly, extrapolating by the end
    slopes past a finite window edge and returning +inf past an edge
    the grid itself marks as infinite.

    ``analytic`` tags instances backed by a closed form, ``convex``
    asserts discrete midpoint convexity of the stored values (checked
    at construction up to TAU_CVX).
    """

    xs: np.ndarray
    ys: np.ndarray
    rule: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain: tuple = (-math.inf, math.inf)
    analytic: Optional[str] = None
    convex: bool = False

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise ValueError("grid must be two or more matching abscissae/values")
        if not np.all(np.diff(xs) > 0):
            raise ValueError("abscissae must be strictly increasing")
        if np.isnan(ys).any():
            raise ValueError("values must never be NaN")
        if np.isneginf(ys).any():
            raise ValueError("-inf is not a permitted value")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        if self.convex:
            fin = np.flatnonzero(np.isfinite(ys))
            # an extended-real convex function is finite on an interval
            if fin.size and not np.array_equal(fin, np.arange(fin[0], fin[-1] + 1)):
                raise ValueError("convex-tagged values have a gap in their "
                                 "finite support")
            if fin.size >= 3:
                fx, fy = xs[fin], ys[fin]
                s = np.diff(fy) / np.diff(fx)
                tol = TAU_CVX * max(1.0, float(np.abs(fy).max()))
                if np.any(np.diff(s) < -tol):
                    raise ValueError("values tagged convex fail discrete convexity")

    def __call__(self, a):
        arr = np.asarray(a, dtype=float)
        scalar = arr.ndim == 0
        arr1 = np.atleast_1d(arr)
        if self.rule is not None:
            out = np.asarray(self.rule(arr1), dtype=float)
        else:
            out = _interp_extended(self.xs, self.ys, arr1)
        lo, hi = self.domain
        out = np.where((arr1 < lo) | (arr1 > hi), np.inf, out)
        return float(out[0]) if scalar else out

    def finite_window(self) -> tuple:
        """Smallest and largest abscissae with finite stored values."""
        fin = np.isfinite(self.ys)
        if not fin.any():
            raise DomainError("function is +inf on its whole grid")
        fx = self.xs[fin]
        return float(fx[0]), float(fx[-1])

    def write_csv(self, path) -> None:
        """Export the grid as CSV columns (a, value); +inf becomes the literal 'inf'."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a", "value"])
            for a, v in zip(self.xs, self.ys):
                w.writerow([f"{a:.17g}", "inf" if math.isinf(v) else f"{v:.17g}"])


def _interp_extended(xs, ys, a):
    """Linear interpolation honoring +inf cells of the stored grid.

    A query between two finite neighbors interpolates linearly; a query in
    any cell touching a +inf value is +inf (the grid cannot resolve where
    the jump sits inside the cell).  Past a finite grid end the end slope
    extrapolates (window truncation); past an infinite end the function
    stays +inf (domain edge).
    """
    out = np.full(a.shape, np.inf)
    fin = np.isfinite(ys)
    if not fin.any():
        return out
    fx = xs[fin]
    fy = ys[fin]
    left = a < xs[0]
    right = a > xs[-1]
    inside = ~(left | right)
    ai = a[inside]
    idx = np.searchsorted(xs, ai, side="right")
    i0 = np.clip(idx - 1, 0, xs.size - 1)
    i1 = np.clip(idx, 0, xs.size - 1)
    y0, y1 = ys[i0], ys[i1]
    x0, x1 = xs[i0], xs[i1]
    vals = np.full(ai.shape, np.inf)
    both = np.isfinite(y0) & np.isfinite(y1)
    if both.any():
        gap = np.where(x1 > x0, x1 - x0, 1.0)
        t = (ai - x0) / gap
        vals[both] = y0[both] + t[both] * (y1[both] - y0[both])
    exact = ai == x0
    vals[exact] = y0[exact]
    out[inside] = vals
    if fin[0] and fx.size >= 2:
        s = (fy[1] - fy[0]) / (fx[1] - fx[0])
        out[left] = fy[0] + s * (a[left] - fx[0])
    elif fin[0]:
        out[left] = fy[0]
    if fin[-1] and fx.size >= 2:
        s = (fy[-1] - fy[-2]) / (fx[-1] - fx[-2])
        out[right] = fy[-1] + s * (a[right] - fx[-1])
    elif fin[-1]:
        out[right] = fy[-1]
    return out


@dataclass(frozen=True)
class SpeedResult:
    """Spreading speed with the tilt data that produced it.

    ``tilt_root`` is the positive root of tilt * speed = cumulant(tilt)
    when one exists, ``tilt_argmin`` the minimizer of cumulant(t)/t.
    ``rate_function`` carries the swept conjugate for downstream count
    verification when the result came through the speeds pipeline.
    """

    speed: float
    tilt_root: Optional[float] = None
    tilt_argmin: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)
    rate_function: Optional[EvaluableFunction] = None


def _golden_max(objective, lo, hi, tol=1e-10, max_iter=220):
    """Vectorized golden-section maximization of a concave objective on [lo, hi]."""
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    for _ in range(max_iter):
        gap = hi - lo
        if float(np.max(gap)) <= tol:
            break
        d = _INVPHI * gap
        x1 = hi - d
        x2 = lo + d
        f1 = objective(x1)
        f2 = objective(x2)
        right = f2 >= f1
        lo = np.where(right, x1, lo)
        hi = np.where(right, hi, x2)
    xm = 0.5 * (lo + hi)
    return xm, objective(xm)


def _golden_min_scalar(fun, lo, hi, tol=1e-12, max_iter=220):
    """Scalar golden-section minimization of a unimodal function on [lo, hi]."""
    for _ in range(max_iter):
        if hi - lo <= tol * max(1.0, abs(hi)):
            break
        d = _INVPHI * (hi - lo)
        x1, x2 = hi - d, lo + d
        if fun(x1) <= fun(x2):
            hi = x2
        else:
            lo = x1
    xm = 0.5 * (lo + hi)
    return xm, fun(xm)


def _ratio_minimum(f: EvaluableFunction, t_hi: Optional[float] = None):
    """Minimize f(t)/t over t > 0 (optionally over t <= t_hi).

    Returns (value, argmin, attained).  ``attained`` is False when the
    infimum is only approached as t -> inf, in which case ``value`` is
    the asymptotic slope of f and ``argmin`` is None.
    """

    cap = _THETA_CAP
    dom_hi = min(f.domain[1], cap)
    if t_hi is not None:
        dom_hi = min(dom_hi, t_hi)

    def ratio(t):
        v = f(t)
        return v / t if math.isfinite(v) else math.inf

    # Geometric expansion: walk up until the ratio stops decreasing.
    t_prev, t_cur = None, None
    t = 1e-6
    if not math.isfinite(f(t)):
        # Domain may start above zero; probe upward for a finite point.
        probes = np.geomspace(1e-6, dom_hi, 80)
        fin = [p for p in probes if math.isfinite(f(p))]
        if not fin:
            raise DomainError("cumulant is +inf on all of (0, inf)")
        t = fin[0]
    while 2 * t <= dom_hi:
        if ratio(2 * t) >= ratio(t):
            t_prev, t_cur = t, 2 * t
            break
        t = 2 * t
    if t_cur is None:
        # Ran into the domain edge (or cap) while still decreasing.
        edge = dom_hi
        if edge >= cap:
            # Infimum approached as t -> inf; report the asymptotic slope.
            big = cap / 4
            slope = (f(2 * big) - f(big)) / big
            return float(slope), None, False
        lo = max(t / 2, 1e-9)
        tm, vm = _golden_min_scalar(ratio, lo, edge)
        if ratio(edge) <= vm:
            tm, vm = edge, ratio(edge)
        return float(vm), float(tm), True
    lo = max(t_prev / 2, 1e-9)
    tm, vm = _golden_min_scalar(ratio, lo, t_cur)
    return float(vm), float(tm), True


def _default_dual_grid(f: EvaluableFunction) -> GridSpec:
    """Auto window for a conjugate: from below the zero-tilt slope to past the speed."""
    lo_dom = max(f.domain[0], 0.0)
    h0 = 1e-6
    f0 = f(lo_dom)
    if not math.isfinite(f0):
        f0 = f(lo_dom + h0)
    s0 = (f(lo_dom + h0) - f0) / h0
    if not math.isfinite(s0):
        s0 = 0.0
    gamma_up, _, _ = _ratio_minimum(f)
    lo = min(s0, gamma_up) - 1.0
    hi = gamma_up + 1.0
    return GridSpec(lo, hi, 1e-3)


def fenchel_dual(f: EvaluableFunction, a_grid: Optional[GridSpec] = None) -> EvaluableFunction:
    """Convex conjugate g(a) = sup_{t >= 0} (t*a - f(t)).

    The inner maximand is concave in t for convex f, so each grid point
    is resolved by doubling a bracket until the objective turns (or the
    domain ends) and then golden-sectioning to width 1e-10.  Points
    whose objective is still rising at the expansion cap get the value
    +inf (the conjugate diverges there, e.g. beyond the maximal step of
    a bounded-displacement law).
    """

    probes = np.geomspace(1e-9, min(f.domain[1], 1e9), 100)
    if not np.isfinite(np.asarray(f(probes))).any():
        raise DomainError("function is +inf on all of (0, inf); no conjugate")
    if a_grid is None:
        a_grid = _default_dual_grid(f)
    xs = a_grid.abscissae()

    dom_hi = min(f.domain[1], _THETA_CAP)

    def conjugate(avec: np.ndarray) -> np.ndarray:
        avec = np.atleast_1d(np.asarray(avec, dtype=float))

        def objective(t):
            ft = np.asarray(f(t), dtype=float)
            out = np.where(np.isfinite(ft), t * avec - ft, -np.inf)
            return out

        # Per-point doubling; the bracket [0, hi] holds the maximum once
        # the objective fails to improve (concavity), or the cap is hit.
        hi = np.full(avec.shape, min(1.0, dom_hi))
        unresolved = np.ones(avec.shape, dtype=bool)
        cur = objective(hi)
        while True:
            trial = np.minimum(hi * 2.0, dom_hi)
            can_grow = unresolved & (hi < dom_hi)
            if not can_grow.any():
                break
            nxt = objective(trial)
            improving = can_grow & (nxt > cur)
            stalled = can_grow & ~improving
            unresolved = unresolved & ~stalled
            hi = np.where(improving, trial, hi)
            cur = np.where(improving, nxt, cur)
            if not improving.any():
                break
        still_rising = unresolved & (hi >= dom_hi) & (dom_hi >= _THETA_CAP)
        if np.isnan(cur).any():
            raise ToleranceError("conjugate bracket produced NaN objective")
        _, vals = _golden_max(objective, np.zeros_like(hi), np.minimum(2.0 * hi, dom_hi))
        vals = np.asarray(vals, dtype=float)
        vals[still_rising] = np.inf
        return vals

    ys = conjugate(xs)
    tag = f"conjugate({f.analytic})" if f.analytic else None
    # The rule encodes the effective domain exactly (it returns +inf where
    # the supremum diverges); snapping a domain endpoint to the grid here
    # would mask the rule and cost a full grid step of accuracy downstream.
    return EvaluableFunction(xs, ys, rule=conjugate, domain=(-math.inf, math.inf),
                             analytic=tag, convex=True)


def sweep(f: EvaluableFunction) -> EvaluableFunction:
    """Replace strictly positive values of f by +inf; values <= 0 are kept.

    Idempotent, and preserves convexity (the kept region is a sublevel
    set of f).
    """

    ys = np.where(f.ys <= 0, f.ys, np.inf)
    rule = None
    if f.rule is not None:
        inner = f  # evaluation includes the domain mask

        def rule(avec):
            v = np.asarray(inner(np.atleast_1d(avec)), dtype=float)
            return np.where(v <= 0, v, np.inf)

    tag = f"sweep({f.analytic})" if f.analytic else None
    return EvaluableFunction(f.xs, ys, rule=rule, domain=f.domain,
                             analytic=tag, convex=f.convex)


def _multisection(fn, lo, hi, predicate, rounds: int = 4, width: int = 48):
    """Refine the flip point of a monotone predicate along [lo, hi].

    The predicate must hold at ``lo`` and fail at ``hi``; each round
    evaluates ``fn`` once on a vector of probes (cheap even when fn
    re-optimizes per point) and keeps the bracketing cell.  Returns the
    last abscissa where the predicate held.
    """
    for _ in range(rounds):
        ts = np.linspace(lo, hi, width)
        good = predicate(np.asarray(fn(ts)))
        idx = np.flatnonzero(good)
        k = int(idx[-1]) if idx.size else 0
        lo = float(ts[k])
        hi = float(ts[min(k + 1, width - 1)])
    return lo, hi


def _lower_hull(px: np.ndarray, py: np.ndarray):
    """Lower convex hull of points sorted by x (monotone chain)."""
    hx, hy = [], []
    for x, y in zip(px, py):
        while len(hx) >= 2:
            cross = (hx[-1] - hx[-2]) * (y - hy[-2]) - (x - hx[-2]) * (hy[-1] - hy[-2])
            if cross <= 0:
                hx.pop()
                hy.pop()
            else:
                break
        # Duplicate abscissa: keep only the lower value.
        if hx and x == hx[-1]:
            if y < hy[-1]:
                hx.pop()
                hy.pop()
            else:
                continue
        hx.append(x)
        hy.append(y)
    return np.asarray(hx), np.asarray(hy)


def convex_minorant(f: EvaluableFunction, g: EvaluableFunction,
                    grid: Optional[GridSpec] = None,
                    values: Optional[tuple] = None) -> EvaluableFunction:
    """Lower convex envelope of min(f, g) over the working window.

    Built from the lower convex hull of the finite points of min(f, g)
    on the grid; +inf points never enter the hull.  Beyond the hull the
    envelope continues with the end-segment slopes, so the result is
    window-relative: it is convex and <= min(f, g) pointwise, and it is
    the greatest such function wherever the window is wide enough that
    the hull's support is interior.

    ``values`` may carry (f(xs), g(xs)) precomputed on the grid's
    abscissae (e.g. the stored grid of a conjugate built on the same
    grid); the inputs' rules are then only consulted to refine domain
    edges.
    """

    if grid is None:
        los, his = [], []
        for fn in (f, g):
            w = fn.finite_window()
            los.append(w[0])
            his.append(w[1])
        grid = GridSpec(min(los), max(his), 1e-3)
    xs = grid.abscissae()
    if values is not None:
        fy, gy = (np.asarray(v, dtype=float) for v in values)
        if fy.shape != xs.shape or gy.shape != xs.shape:
            raise ValueError("precomputed values do not match the grid")
    else:
        fy, gy = np.asarray(f(xs)), np.asarray(g(xs))
    m = np.minimum(fy, gy)
    fin = np.isfinite(m)
    if not fin.any():
        raise DomainError("min(f, g) is +inf everywhere on the window")
    # Domain edges of the inputs fall between grid points; locate them by
    # bisection and add them to the point set, otherwise the hull snaps a
    # swept boundary (and the crossing read off it) to the grid pitch.
    px, py = list(xs[fin]), list(m[fin])
    for fn, vals in ((f, fy), (g, gy)):
        ok = np.isfinite(vals)
        for i in np.flatnonzero(ok[:-1] != ok[1:]):
            if ok[i]:
                a_fin, _ = _multisection(fn, float(xs[i]), float(xs[i + 1]),
                                         np.isfinite)
            else:
                hi, _ = _multisection(lambda t: fn(xs[i + 1] + xs[i] - t),
                                      float(xs[i]), float(xs[i + 1]), np.isfinite)
                a_fin = xs[i + 1] + xs[i] - hi
            edge = float(np.minimum(f(a_fin), g(a_fin)))
            if math.isfinite(edge):
                px.append(float(a_fin))
                py.append(edge)
    order = np.argsort(px)
    hx, hy = _lower_hull(np.asarray(px)[order], np.asarray(py)[order])

    if hx.size == 1:
        hx = np.array([hx[0], hx[0] + grid.step])
        hy = np.array([hy[0], hy[0]])

    def rule(avec):
        a = np.atleast_1d(np.asarray(avec, dtype=float))
        out = np.interp(a, hx, hy)
        sL = (hy[1] - hy[0]) / (hx[1] - hx[0])
        sR = (hy[-1] - hy[-2]) / (hx[-1] - hx[-2])
        left = a < hx[0]
        right = a > hx[-1]
        out[left] = hy[0] + sL * (a[left] - hx[0])
        out[right] = hy[-1] + sR * (a[right] - hx[-1])
        return out

    ys = rule(xs)
    return EvaluableFunction(xs, ys, rule=rule, domain=(-math.inf, math.inf),
                             analytic=None, convex=True)


def speed_from_dual(fd: EvaluableFunction) -> float:
    """Right edge of the nonpositive set of a convex rate function.

    For a conjugate with strictly negative minimum this is the zero
    crossing sup{a : fd(a) < 0}.  The boundary is kept weakly (values
    exactly zero count as inside), which also resolves the degenerate
    single-walk case where the rate function is an indicator.
    """

    ys = fd.ys
    le0 = np.flatnonzero(np.isfinite(ys) & (ys <= 0))
    if le0.size == 0:
        raise DomainError("rate function is positive everywhere; no crossing")
    i = int(le0[-1])
    if i == ys.size - 1:
        raise ToleranceError("window does not bracket the zero crossing")
    lo, hi = _multisection(fd, float(fd.xs[i]), float(fd.xs[i + 1]),
                           lambda v: v <= 0)
    return 0.5 * (lo + hi)


def speed_from_inf(k: EvaluableFunction) -> SpeedResult:
    """Spreading speed as inf_{t>0} k(t)/t for a convex cumulant k.

    The ratio is unimodal when k is convex with k(0) > 0, so a doubling
    bracket plus golden section finds the infimum.  When the infimum is
    only approached as t -> inf (bounded displacements), the speed is
    the asymptotic slope of k and no tilt root is reported.
    """

    value, argmin, attained = _ratio_minimum(k)
    diagnostics = {"formula": "inf k(t)/t", "attained": attained}
    tilt_root = None
    if attained and argmin is not None:
        residual = abs(argmin * value - k(argmin))
        diagnostics["root_residual"] = residual
        if residual <= TAU_ROOT * max(1.0, abs(value)):
            tilt_root = argmin
    return SpeedResult(speed=value, tilt_root=tilt_root, tilt_argmin=argmin,
                       diagnostics=diagnostics)
