import math

import numpy as np
import pytest

from probequeue import mc
from probequeue.errors import ParameterError
from probequeue.estimators import (
    estimate_lambda,
    estimate_lambda_windows,
    estimate_p_one_lane,
    estimate_p_two_lane,
    estimate_turn_ratios,
    last_probe_location,
)
from probequeue.model import Movement


class TestLastProbeLocation:
    def test_exact_slot_distance_inverts(self, geometry):
        # slot 6 sits at 10 + 6*5 + 5*2.5 = 52.5
        assert last_probe_location(52.5, geometry) == 6

    def test_noisy_position_rounds(self, geometry):
        assert last_probe_location(53.9, geometry) == 6  # (53.9-7.5)/7.5 = 6.19

    def test_probe_at_offset_clamps_to_first_slot(self, geometry):
        # (10 - 10 + 2.5)/7.5 rounds to 0; a stopped probe is at least slot 1
        assert last_probe_location(10.0, geometry) == 1

    def test_ties_round_away_from_zero(self, geometry):
        # (26.25 - 7.5)/7.5 = 2.5 exactly
        assert last_probe_location(26.25, geometry) == 3

    def test_inside_offset_rejected(self, geometry):
        with pytest.raises(ParameterError):
            last_probe_location(5.0, geometry)


class TestPenetrationOneLane:
    def test_all_positions_probes(self):
        for l_p in range(2, 30):
            est = estimate_p_one_lane(l_p, l_p)
            assert est.usable and est.p_hat == 1.0

    def test_single_probe_gives_zero(self):
        est = estimate_p_one_lane(1, 9)
        assert est.usable and est.p_hat == 0.0

    @pytest.mark.parametrize("c_p,l_p", [(1, 1), (0, 5), (3, None)])
    def test_unusable_cases(self, c_p, l_p):
        est = estimate_p_one_lane(c_p, l_p)
        assert not est.usable and math.isnan(est.p_hat)

    def test_raw_preserved_when_clamped(self):
        est = estimate_p_one_lane(9, 5)
        assert est.p_hat == 1.0 and est.raw == 2.0

    def test_unbiased_on_poisson_queues(self, rng):
        """Sample mean within 3 standard errors (and the 0.01 band) at p=0.3."""
        s = mc.sample_one_lane_observations(mu=10.0, p=0.3, size=10_000, rng=rng)
        mask = s.l_p > 1
        vals = (s.c_p[mask] - 1) / (s.l_p[mask] - 1)
        err = abs(vals.mean() - 0.3)
        assert err < 3 * vals.std(ddof=1) / np.sqrt(vals.size)
        assert err < 0.01


class TestPenetrationTwoLane:
    def test_worked_observation(self):
        est = estimate_p_two_lane(8, 9, 0.75)
        assert est.raw == pytest.approx((8 / 1.75 - 1) / 8, abs=1e-12)
        assert round(est.p_hat, 2) == 0.45

    def test_balanced_lanes_full_penetration(self):
        for l_p in range(2, 20):
            est = estimate_p_two_lane(2 * l_p, l_p, 1.0)
            assert est.p_hat == 1.0 and est.raw == pytest.approx(1.0, abs=1e-12)

    def test_reduces_to_one_lane_at_kappa_zero(self, rng):
        for _ in range(100):
            l_p = int(rng.integers(2, 40))
            c_p = int(rng.integers(2, l_p + 1))
            two = estimate_p_two_lane(c_p, l_p, 0.0)
            one = estimate_p_one_lane(c_p, l_p)
            assert two.raw == pytest.approx(one.raw, abs=1e-15)

    def test_needs_two_probes_and_two_positions(self):
        assert not estimate_p_two_lane(1, 9, 0.5).usable
        assert not estimate_p_two_lane(5, 1, 0.5).usable
        assert not estimate_p_two_lane(0, None, 0.5).usable

    def test_kappa_validated(self):
        with pytest.raises(ParameterError):
            estimate_p_two_lane(4, 6, 1.5)

    @pytest.mark.parametrize("p", [0.2, 0.5, 0.9])
    def test_mean_on_poisson_queues_with_known_ratio(self, rng, p):
        """Accumulation ratio 0.5, queues Poisson(40)/Poisson(20): the sample
        mean stays inside the 0.015 band around the true p.  Realized queues
        fluctuate around the configured ratio, which leaves a small residual
        the ratio correction cannot remove (measured well under 0.01 here),
        so the band is wider than pure Monte Carlo error."""
        s = mc.sample_two_lane_observations(40.0, 20.0, p, 100_000, rng)
        mask = s.retained & (s.l_p > 1) & (s.c_p > 1)
        vals = (s.c_p[mask] / 1.5 - 1.0) / (s.l_p[mask] - 1)
        assert abs(vals.mean() - p) < 0.015

    def test_unbiased_under_balanced_placement(self, rng):
        """Exactly unbiased under the placement law its derivation assumes."""
        l_p, c_p = mc.sample_balanced_placement(0.5, 1.0, 50_000, rng)
        mask = (l_p > 1) & (c_p > 1)
        vals = (c_p[mask] / 2.0 - 1.0) / (l_p[mask] - 1)
        err = abs(vals.mean() - 0.5)
        assert err < 3 * vals.std(ddof=1) / np.sqrt(vals.size)


class TestArrivalRate:
    def test_direct_arithmetic(self):
        assert estimate_lambda(10, 0, 0.5, 0.0, 20.0) == pytest.approx(1.0)

    def test_no_growth_means_zero(self):
        assert estimate_lambda(7, 7, 0.4, 5.0, 25.0) == 0.0

    def test_parameter_errors(self):
        with pytest.raises(ParameterError):
            estimate_lambda(5, 0, 0.0, 0.0, 10.0)
        with pytest.raises(ParameterError):
            estimate_lambda(5, 0, 0.5, 10.0, 10.0)

    def test_scale_consistency(self, rng):
        """Doubling both the probe-count growth and p leaves the estimate alone."""
        for _ in range(50):
            dx = int(rng.integers(1, 40))
            p = float(rng.uniform(0.05, 0.5))
            dt = float(rng.uniform(1.0, 100.0))
            a = estimate_lambda(dx, 0, p, 0.0, dt)
            b = estimate_lambda(2 * dx, 0, 2 * p, 0.0, dt)
            assert a == pytest.approx(b, rel=1e-12)

    def test_window_pooling(self):
        windows = [(0, 4, 0.0, 10.0), (0, 8, 100.0, 110.0)]
        pooled, per = estimate_lambda_windows(windows, 0.5)
        assert per == [pytest.approx(0.8), pytest.approx(1.6)]
        assert pooled == pytest.approx(12 / (0.5 * 20))


class TestTurnRatios:
    def test_all_straight(self):
        est = estimate_turn_ratios([1, 2, 3], {1: Movement.STRAIGHT,
                                               2: Movement.STRAIGHT,
                                               3: Movement.STRAIGHT})
        assert (est.l_n_hat, est.l_m_hat, est.l_nm_hat) == (0.0, 0.0, 1.0)

    def test_no_classified_probes_unusable(self):
        est = estimate_turn_ratios([1, 2], {})
        assert not est.usable and est.sample_count == 0

    def test_ratios_sum_to_one(self, rng):
        movements = [Movement.RIGHT, Movement.LEFT, Movement.STRAIGHT]
        exits = {i: movements[int(rng.integers(0, 3))] for i in range(500)}
        est = estimate_turn_ratios(range(500), exits)
        assert est.usable
        assert abs(est.l_n_hat + est.l_m_hat + est.l_nm_hat - 1.0) < 1e-12

    def test_unseen_probes_ignored(self):
        est = estimate_turn_ratios([1, 2, 99], {1: Movement.RIGHT,
                                                2: Movement.LEFT})
        assert est.sample_count == 2
        assert est.l_n_hat == 0.5 and est.l_m_hat == 0.5

    def test_single_run_recovers_demand_mix(self):
        """One 1200 s run at p = 0.5 with the symmetric 200/200/50 mix:
        each estimated ratio within 3 multinomial standard errors of its
        true share."""
        from probequeue.model import DemandProfile, SignalTiming
        from probequeue.sim import SimConfig, simulate

        demand = DemandProfile(lambda_n=200 / 1200, lambda_m=200 / 1200,
                               lambda_nm=50 / 1200, p=0.5, alpha=0.5)
        timing = SignalTiming(cycle_s=90.0, red_window_n=(0.0, 41.0),
                              red_window_m=(0.0, 41.0))
        trace = simulate(SimConfig(demand=demand, timing=timing, seed=6,
                                   duration_s=1200.0))
        probe_ids = [a.vehicle_id for a in trace.arrivals if a.is_probe]
        exits = {d.vehicle_id: d.movement for d in trace.departures
                 if d.is_probe}
        est = estimate_turn_ratios(probe_ids, exits)
        assert est.usable and est.sample_count > 100
        for got, want in zip((est.l_n_hat, est.l_m_hat, est.l_nm_hat),
                             (200 / 450, 200 / 450, 50 / 450)):
            se = math.sqrt(want * (1 - want) / est.sample_count)
            assert abs(got - want) < 3 * se
