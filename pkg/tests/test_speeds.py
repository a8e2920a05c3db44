"""Speed pipelines: one-type reports and the two-type anomalous machinery."""

import math

import numpy as np
import pytest

from brwlab.models import (
    Gaussian,
    OffspringLaw,
    PointMass,
    ReproductionLaw,
    Seeding,
    TwoTypeSystem,
    skeleton_of_bbm,
)
from brwlab.speeds import (
    anomalous_speed,
    expected_numbers_speed,
    figure_table,
    one_type_speed,
    reversed_speed,
)

SQRT2 = math.sqrt(2.0)


class TestOneTypeSpeed:
    def test_unit_skeleton(self):
        law = ReproductionLaw(OffspringLaw("geometric", math.e), Gaussian(0.0, 1.0))
        r = one_type_speed(law)
        assert r.speed == pytest.approx(SQRT2, abs=1e-6)
        assert r.tilt_root == pytest.approx(SQRT2, abs=1e-6)
        assert r.diagnostics["formula_gap"] < 1e-6

    def test_single_walk_rate_indicator(self):
        mu = 0.4
        law = ReproductionLaw(OffspringLaw("deterministic", 1), PointMass(mu))
        r = one_type_speed(law)
        assert r.speed == pytest.approx(mu, abs=1e-8)
        rate = r.rate_function
        assert rate(mu - 0.1) == pytest.approx(0.0, abs=1e-9)
        assert math.isinf(rate(mu + 0.1))

    def test_binary_gaussian_closed_form(self):
        # minimize (log2 + t^2/2)/t: minimum sqrt(2 log 2) at t = sqrt(2 log 2)
        law = ReproductionLaw(OffspringLaw("deterministic", 2), Gaussian(0.0, 1.0))
        r = one_type_speed(law)
        want = math.sqrt(2.0 * math.log(2.0))
        assert r.speed == pytest.approx(want, abs=1e-8)
        ts = np.linspace(1e-4, 6, 300001)
        oracle = float(np.min((math.log(2.0) + 0.5 * ts * ts) / ts))
        assert r.speed == pytest.approx(oracle, abs=1e-7)

    def test_rate_function_supports_count_checks(self):
        law = ReproductionLaw(OffspringLaw("geometric", math.e), Gaussian(0.0, 1.0))
        rate = one_type_speed(law).rate_function
        assert rate(0.0) == pytest.approx(-1.0, abs=1e-7)
        assert rate(1.0) == pytest.approx(-0.5, abs=1e-7)
        assert math.isinf(rate(SQRT2 + 1e-3))


class TestAnomalousSpeed:
    def test_worked_example(self):
        rep = anomalous_speed(skeleton_of_bbm(1.0 / 3.0, 3.0, 0.5))
        target = 4.0 / math.sqrt(6.0)
        assert rep.route_formula == pytest.approx(target, abs=1e-6)
        assert rep.route_minorant == pytest.approx(target, abs=1e-4)
        assert rep.speed_nu == pytest.approx(SQRT2, abs=1e-6)
        assert rep.speed_eta == pytest.approx(SQRT2, abs=1e-6)
        assert rep.anomalous

    def test_boundary_family_member_is_not_anomalous(self):
        rep = anomalous_speed(skeleton_of_bbm(1.0, 1.0, 0.5))
        assert rep.speed == pytest.approx(SQRT2, abs=1e-5)
        assert not rep.anomalous

    def test_scaled_family_closed_form(self):
        for lam in (1.5, 2.0, 5.0):
            rep = anomalous_speed(skeleton_of_bbm(1.0 / lam, lam, 0.5))
            want = (1.0 + lam) / math.sqrt(2.0 * lam)
            assert rep.route_formula == pytest.approx(want, abs=1e-6)
            assert rep.route_minorant == pytest.approx(want, abs=1e-4)

    def test_speed_never_below_either_class(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            lam = float(rng.uniform(1.0, 6.0))
            v = float(rng.uniform(0.1, 2.0))
            rep = anomalous_speed(skeleton_of_bbm(v, lam, 0.5))
            assert rep.speed >= max(rep.speed_nu, rep.speed_eta) - 1e-6
            assert rep.rate(rep.speed - 0.05) <= 0.0

    def test_route_agreement_randomized(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            lam = float(rng.uniform(1.0, 6.0))
            v = float(rng.uniform(0.1, 2.0))
            rep = anomalous_speed(skeleton_of_bbm(v, lam, 0.5))
            assert abs(rep.route_minorant - rep.route_formula) <= 1e-4

    def test_monotone_in_branching_rate_along_family(self):
        # closed form (1+lam)/sqrt(2 lam) increases in lam past 1
        speeds = [anomalous_speed(skeleton_of_bbm(1.0 / lam, lam, 0.5)).route_formula
                  for lam in (1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0)]
        assert np.all(np.diff(speeds) >= -1e-9)

    def test_anomaly_criterion_equivalence(self):
        # anomalous exactly when both rate functions are positive at the speed
        from brwlab.convex_analysis import fenchel_dual
        rng = np.random.default_rng(23)
        for _ in range(25):
            lam = float(rng.uniform(1.0, 6.0))
            v = float(rng.uniform(0.1, 2.0))
            sysm = skeleton_of_bbm(v, lam, 0.5)
            rep = anomalous_speed(sysm)
            knu_star = fenchel_dual(sysm.law_nu.cumulant_function())
            keta_star = fenchel_dual(sysm.law_eta.cumulant_function())
            a, b = float(knu_star(rep.speed)), float(keta_star(rep.speed))
            if abs(a) < 1e-3 or abs(b) < 1e-3:
                continue  # numerically at the boundary; the flag has a margin
            assert rep.anomalous == (a > 0 and b > 0), (lam, v, a, b)

    def test_sweep_only_raises_the_envelope(self):
        rep = anomalous_speed(skeleton_of_bbm(1.0 / 3.0, 3.0, 0.5))
        xs = rep.expected_rate.xs
        r_vals = rep.rate(xs)
        e_vals = rep.expected_rate(xs)
        both = np.isfinite(r_vals) & np.isfinite(e_vals)
        assert np.all(r_vals[both] >= e_vals[both] - 1e-9)


class TestReversedAndExpected:
    def test_reversed_worked_example(self):
        sysm = skeleton_of_bbm(1.0 / 3.0, 3.0, 0.5)
        assert reversed_speed(sysm) == pytest.approx(SQRT2, abs=1e-5)

    def test_symmetric_system_equals_one_type(self):
        law = ReproductionLaw(OffspringLaw("geometric", math.e), Gaussian(0.0, 1.0))
        sysm = TwoTypeSystem(law, law, Seeding(0.5))
        assert reversed_speed(sysm) == pytest.approx(one_type_speed(law).speed,
                                                     abs=1e-5)

    def test_reversed_dominated_envelope(self):
        # at lam=5 the swapped envelope reduces to the faster class alone
        sysm = skeleton_of_bbm(1.0 / 5.0, 5.0, 0.5)
        assert reversed_speed(sysm) == pytest.approx(SQRT2, abs=1e-5)

    def test_expectation_trap(self):
        target = 4.0 / math.sqrt(6.0)
        sysm = skeleton_of_bbm(1.0 / 3.0, 3.0, 0.5)
        assert expected_numbers_speed(sysm) == pytest.approx(target, abs=1e-4)
        rev = sysm.swap_roles()
        # expectations cannot see the role reversal; the true speed can
        assert expected_numbers_speed(rev) == pytest.approx(target, abs=1e-4)
        assert reversed_speed(sysm) == pytest.approx(SQRT2, abs=1e-5)

    def test_speeds_do_not_depend_on_seeding_probability(self):
        vals = [anomalous_speed(skeleton_of_bbm(1.0 / 3.0, 3.0, p)).speed
                for p in (0.01, 0.5, 1.0)]
        assert max(vals) - min(vals) < 1e-9

    def test_expected_at_least_minorant_crossing(self):
        rng = np.random.default_rng(5)
        for _ in range(15):
            lam = float(rng.uniform(1.0, 6.0))
            v = float(rng.uniform(0.1, 2.0))
            sysm = skeleton_of_bbm(v, lam, 0.5)
            rep = anomalous_speed(sysm)
            assert expected_numbers_speed(sysm) >= rep.route_minorant - 1e-6


def test_figure_table_crosses_zero_at_the_anomalous_speed():
    sysm = skeleton_of_bbm(1.0 / 3.0, 3.0, 0.5)
    rows = figure_table(sysm, lo=-0.5, hi=2.0, step=1e-3)
    assert rows[0][0] == pytest.approx(-0.5)
    assert rows[-1][0] == pytest.approx(2.0)
    a = np.array([r[0] for r in rows])
    cv = np.array([r[3] for r in rows])
    sign_change = np.flatnonzero((cv[:-1] <= 0) & (cv[1:] > 0))
    crossing = a[sign_change[-1]]
    assert crossing == pytest.approx(4.0 / math.sqrt(6.0), abs=2e-3)
