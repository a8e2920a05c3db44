"""Speed reports: one-type speeds and the two-type anomalous-speed pipeline.

The one-type speed is computed by both formulas (zero crossing of the
conjugate, infimum of cumulant-to-tilt ratios) and reconciled.  For a
reducible two-type system the terminal-class speed comes through two
independent routes: the zero crossing of the swept convex envelope of
the two rate functions, and a constrained two-tilt min-max
optimization.  Both must agree within TAU_CROSS, which is the main
internal consistency check of the whole artifact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convex_analysis import (
    TAU_SPEED_ANALYTIC,
    EvaluableFunction,
    GridSpec,
    SpeedResult,
    _golden_min_scalar,
    _ratio_minimum,
    convex_minorant,
    fenchel_dual,
    speed_from_dual,
    speed_from_inf,
    sweep,
)
from .errors import HypothesisError, ToleranceError
from .models import ReproductionLaw, TwoTypeSystem

TAU_CROSS = 1e-4


@dataclass(frozen=True)
class AnomalousReport:
    """Terminal-class speed of a reducible two-type system, both routes.

    ``speed`` is the reconciled value (the minorant route is the
    reference); ``anomalous`` flags a speed strictly above both
    single-class speeds, which happens exactly when the envelope
    bridges the two rate functions linearly across zero.
    ``expected_rate`` is the un-swept envelope governing expected
    counts; it can cross zero past the true speed.
    """

    speed_nu: float
    speed_eta: float
    speed: float
    route_minorant: float
    route_formula: float
    rate: EvaluableFunction
    expected_rate: EvaluableFunction
    anomalous: bool


def one_type_speed(law: ReproductionLaw) -> SpeedResult:
    """Spreading speed of a one-type law, cross-checked between formulas.

    Returns the infimum-formula result enriched with the swept
    conjugate (rate function) so downstream count checks can evaluate
    it, plus reconciliation diagnostics.
    """

    k = law.cumulant_function()
    by_inf = speed_from_inf(k)
    dual = fenchel_dual(k)
    by_dual = speed_from_dual(dual)
    gap = abs(by_dual - by_inf.speed)
    diagnostics = dict(by_inf.diagnostics)
    diagnostics.update({
        "speed_from_dual": by_dual,
        "speed_from_inf": by_inf.speed,
        "formula_gap": gap,
    })
    return SpeedResult(speed=by_inf.speed,
                       tilt_root=by_inf.tilt_root,
                       tilt_argmin=by_inf.tilt_argmin,
                       diagnostics=diagnostics,
                       rate_function=sweep(dual))


def _system_window(law_nu: ReproductionLaw, law_eta: ReproductionLaw) -> GridSpec:
    """Shared working grid wide enough for both rate functions and the bridge."""
    g_nu, _, _ = _ratio_minimum(law_nu.cumulant_function())
    g_eta, _, _ = _ratio_minimum(law_eta.cumulant_function())
    hi = 2.0 * (abs(g_nu) + abs(g_eta)) + 4.0
    lo = -max(1.0, 0.5 * hi)
    return GridSpec(lo, hi, 2e-3)


def _minorant_crossing(law_first: ReproductionLaw, law_second: ReproductionLaw,
                       sweep_first: bool = True):
    """Zero crossing of sweep(cv(sweep?(dual(k1)), dual(k2))) on a shared grid.

    The envelope reuses the grids the conjugates were built on, so the
    whole route costs two conjugate constructions plus hulls; exactness
    at swept edges and at the crossing comes from rule-level bisection.
    """
    grid = _system_window(law_first, law_second)
    d1 = fenchel_dual(law_first.cumulant_function(), grid)
    d2 = fenchel_dual(law_second.cumulant_function(), grid)
    first = sweep(d1) if sweep_first else d1
    envelope = convex_minorant(first, d2, grid, values=(first.ys, d2.ys))
    rate = sweep(envelope)
    return speed_from_dual(rate), rate, envelope, d1, d2, grid


def _formula_route(law_nu: ReproductionLaw, law_eta: ReproductionLaw) -> float:
    """inf over 0 < s <= t of max(k_nu(s)/s, k_eta(t)/t) by nested searches.

    The inner ratio is unimodal on (0, t], so its constrained minimum is
    the unconstrained minimizer clipped to t; the outer objective is the
    max of a nonincreasing function and a unimodal one, so a doubling
    bracket plus golden section finds the minimum.  A coarse scan
    around the optimum guards against plateau stalls.
    """

    k_nu = law_nu.cumulant
    k_eta = law_eta.cumulant

    if not (math.isfinite(float(k_nu(1.0))) or math.isfinite(float(k_nu(0.5)))):
        raise HypothesisError("no admissible tilt pair: nu-cumulant is infinite")

    _, argmin_nu, attained_nu = _ratio_minimum(law_nu.cumulant_function())
    clip_at = argmin_nu if attained_nu and argmin_nu is not None else math.inf

    def inner(t: float) -> float:
        s = min(t, clip_at)
        return float(k_nu(s)) / s

    def outer(t: float) -> float:
        val_eta = float(k_eta(t)) / t
        if not math.isfinite(val_eta):
            return math.inf
        return max(inner(t), val_eta)

    if not any(math.isfinite(outer(t)) for t in np.geomspace(1e-3, 64.0, 40)):
        raise HypothesisError("no admissible tilt pair: eta-cumulant is infinite")

    t = 1e-3
    while not math.isfinite(outer(t)) and t < 2.0 ** 20:
        t *= 2.0
    t_prev, t_cur = t, None
    while t < 2.0 ** 30:
        if outer(2 * t) >= outer(t):
            t_cur = 2 * t
            break
        t_prev, t = t, 2 * t
    if t_cur is None:
        t_cur = t
    tm, vm = _golden_min_scalar(outer, max(t_prev / 2, 1e-9), t_cur)
    # plateau guard: coarse log-spaced scan, refine the best cell
    scan = np.geomspace(max(tm / 4, 1e-6), tm * 4, 160)
    vals = np.array([outer(s) for s in scan])
    j = int(np.argmin(vals))
    if vals[j] < vm:
        lo = scan[max(j - 1, 0)]
        hi = scan[min(j + 1, scan.size - 1)]
        tm2, vm2 = _golden_min_scalar(outer, lo, hi)
        if vm2 < vm:
            vm = vm2
    return float(vm)


def anomalous_speed(sys: TwoTypeSystem) -> AnomalousReport:
    """Terminal-class speed of a reducible system, via both routes.

    Route 1 sweeps the nu rate function, takes the convex envelope with
    the eta rate function, sweeps again and reads off the zero
    crossing.  Route 2 minimizes the larger of the two
    cumulant-to-tilt ratios over ordered tilt pairs.  The two must
    agree within TAU_CROSS.
    """

    if not sys.finite_seed_transform:
        raise HypothesisError("seeding displacement transform must be finite "
                              "for every nonnegative tilt")
    crossing, rate, envelope, d_nu, d_eta, grid = _minorant_crossing(
        sys.law_nu, sys.law_eta)
    formula = _formula_route(sys.law_nu, sys.law_eta)
    gap = abs(crossing - formula)
    if gap > 10 * TAU_CROSS:
        raise ToleranceError(f"speed routes disagree by {gap:.3g}")

    speed_nu = speed_from_inf(sys.law_nu.cumulant_function()).speed
    speed_eta = speed_from_inf(sys.law_eta.cumulant_function()).speed
    expected_rate = convex_minorant(d_nu, d_eta, grid, values=(d_nu.ys, d_eta.ys))
    anomalous = crossing > max(speed_nu, speed_eta) + TAU_SPEED_ANALYTIC
    return AnomalousReport(speed_nu=speed_nu, speed_eta=speed_eta,
                           speed=crossing, route_minorant=crossing,
                           route_formula=formula, rate=rate,
                           expected_rate=expected_rate, anomalous=anomalous)


def reversed_speed(sys: TwoTypeSystem) -> float:
    """Terminal-class speed with the class roles exchanged.

    In the reversed order the envelope is dominated by the (un-swept)
    original nu rate function, so no anomaly can arise from it.
    """

    if not sys.finite_seed_transform:
        raise HypothesisError("seeding displacement transform must be finite "
                              "for every nonnegative tilt")
    crossing, _, _, _, _, _ = _minorant_crossing(sys.law_eta, sys.law_nu)
    return crossing


def expected_numbers_speed(sys: TwoTypeSystem) -> float:
    """Zero crossing of the un-swept envelope of the two rate functions.

    This is where expected terminal-class counts start to decay.  It is
    symmetric in the two classes, so it cannot see the role reversal
    and can strictly exceed the true speed: the expectation trap.
    """

    if not sys.finite_seed_transform:
        raise HypothesisError("seeding displacement transform must be finite "
                              "for every nonnegative tilt")
    crossing, _, _, _, _, _ = _minorant_crossing(sys.law_nu, sys.law_eta,
                                                 sweep_first=False)
    return crossing


def figure_table(sys: TwoTypeSystem, lo: float = -0.5, hi: float = 2.0,
                 step: float = 1e-3):
    """Rows (a, kswept_nu, kdual_eta, cv) over [lo, hi]: the three curves
    whose zero crossings exhibit the anomalous speed."""
    grid = _system_window(sys.law_nu, sys.law_eta)
    d_nu = fenchel_dual(sys.law_nu.cumulant_function(), grid)
    d_eta = fenchel_dual(sys.law_eta.cumulant_function(), grid)
    swept_nu = sweep(d_nu)
    envelope = convex_minorant(swept_nu, d_eta, grid)
    xs = GridSpec(lo, hi, step).abscissae()
    return [(float(a), float(swept_nu(a)), float(d_eta(a)), float(envelope(a)))
            for a in xs]
