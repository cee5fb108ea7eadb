"""Tests for the traffic-level simulator and its report statistics."""

import math

import pytest

from treesplit.sim import (
    EmptySampleError,
    Gated,
    MetricsReport,
    ProtocolError,
    Windowed,
    collisions_per_cri_cdf,
    delay_stats,
    feedback_cost,
    feedback_value_histogram,
    simulate,
    throughput_estimate,
)


@pytest.fixture(scope="module")
def atic_mid_load():
    return simulate("atic", Gated(), 0.5, 20000, 42)


@pytest.fixture(scope="module")
def sicta_near_mst():
    return simulate("sicta", Gated(), 0.693, 150000, 11)


class TestReportInvariants:
    def test_deterministic_for_fixed_seed(self, atic_mid_load):
        again = simulate("atic", Gated(), 0.5, 20000, 42)
        assert again.to_dict() == atic_mid_load.to_dict()

    def test_different_seed_differs(self, atic_mid_load):
        other = simulate("atic", Gated(), 0.5, 20000, 43)
        assert other.to_dict() != atic_mid_load.to_dict()

    def test_packet_conservation(self, atic_mid_load):
        r = atic_mid_load
        assert r.arrivals_total == r.packets_decoded + r.terminal_backlog

    def test_one_delay_sample_per_decode(self, atic_mid_load):
        r = atic_mid_load
        assert len(r.delay_samples) == r.packets_decoded
        assert all(d >= 0 for d in r.delay_samples)

    def test_histogram_masses(self, atic_mid_load):
        r = atic_mid_load
        assert sum(r.collision_degree_hist.values()) == r.collision_slots
        assert sum(r.feedback_k_hist.values()) == r.success_slots
        assert all(d >= 2 for d in r.collision_degree_hist)

    def test_slot_partition(self, atic_mid_load):
        r = atic_mid_load
        assert r.idle_slots + r.success_slots + r.collision_slots == r.slots_simulated
        assert r.slots_simulated >= 20000

    def test_per_cri_lists_align(self, atic_mid_load):
        r = atic_mid_load
        assert len(r.collisions_per_cri) == r.cri_count
        assert len(r.decoded_per_cri) == r.cri_count
        assert sum(r.decoded_per_cri) == r.packets_decoded

    def test_round_trip_dict(self, atic_mid_load):
        blob = atic_mid_load.to_dict()
        back = MetricsReport.from_dict(blob)
        assert back.to_dict() == blob

    def test_throughput_definition(self, atic_mid_load):
        r = atic_mid_load
        assert throughput_estimate(r) == pytest.approx(
            r.packets_decoded / r.slots_simulated)


class TestValidation:
    def test_zero_rate_runs_idle(self):
        r = simulate("bta", Gated(), 0.0, 500, 1)
        assert r.slots_simulated == 500
        assert r.idle_slots == 500
        assert throughput_estimate(r) == 0.0

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            simulate("bta", Gated(), -0.1, 100, 1)

    def test_budget_must_be_positive(self):
        with pytest.raises(ValueError):
            simulate("bta", Gated(), 0.3, 0, 1)

    def test_policy_coercion_from_string(self):
        a = simulate("atic", "gated", 0.4, 5000, 9)
        b = simulate("atic", Gated(), 0.4, 5000, 9)
        assert a.to_dict() == b.to_dict()
        w = simulate("atic", "windowed:8", 0.4, 5000, 9)
        assert w.policy == Windowed(8.0).describe()

    def test_window_length_validated(self):
        with pytest.raises(ValueError):
            Windowed(0.0)
        with pytest.raises(ValueError):
            simulate("atic", "windowed:0", 0.4, 100, 1)

    def test_unknown_protocol(self):
        with pytest.raises(ValueError):
            simulate("aloha", Gated(), 0.4, 100, 1)


class TestDelayStatistics:
    def test_mid_load_anchor(self):
        r = simulate("atic", Gated(), 0.5, 150000, 7)
        st = delay_stats(r)
        assert 0.80 <= st.mean <= 1.05
        assert set(st.percentiles) == {50, 90, 95, 99}
        assert st.variance >= 0.0

    def test_percentiles_monotone(self, atic_mid_load):
        st = delay_stats(atic_mid_load)
        p = st.percentiles
        assert p[50] <= p[90] <= p[95] <= p[99]

    def test_empty_sample_error(self):
        r = simulate("bta", Gated(), 0.0, 50, 1)
        with pytest.raises(EmptySampleError):
            delay_stats(r)

    def test_delay_grows_with_load(self):
        low = delay_stats(simulate("sicta", Gated(), 0.2, 60000, 5)).mean
        high = delay_stats(simulate("sicta", Gated(), 0.6, 60000, 5)).mean
        assert high > low


class TestDistributions:
    def test_feedback_histogram_normalized(self, sicta_near_mst):
        hist = feedback_value_histogram(sicta_near_mst)
        assert sum(hist.values()) == pytest.approx(1.0, abs=1e-12)
        assert hist[1] > 0.2  # plain successes dominate alongside k=2

    def test_feedback_histogram_needs_sic(self):
        r = simulate("bta", Gated(), 0.3, 5000, 2)
        with pytest.raises(ProtocolError):
            feedback_value_histogram(r)

    def test_collision_cdf_monotone_and_complete(self, sicta_near_mst):
        cdf = collisions_per_cri_cdf(sicta_near_mst)
        values = [cdf.at(x) for x in cdf.support]
        assert values == sorted(values)
        assert values[-1] == pytest.approx(1.0)
        assert cdf.at(max(cdf.support) + 10) == pytest.approx(1.0)
        assert cdf.at(-1) == 0.0

    def test_degree_two_dominates_collisions(self, sicta_near_mst):
        hist = sicta_near_mst.collision_degree_hist
        assert hist[2] == max(hist.values())


class TestStabilityFlag:
    def test_moderate_load_is_stable(self, atic_mid_load):
        assert not atic_mid_load.unstable

    def test_saturated_run_is_flagged(self):
        r = simulate("sicta", Gated(), 2.0, 60000, 5)
        assert r.unstable
        assert r.terminal_backlog > 1000

    def test_supercritical_atic_flagged(self):
        r = simulate("atic", Gated(), 0.95, 250000, 3)
        assert r.unstable

    def test_subcritical_atic_unflagged(self):
        r = simulate("atic", Gated(), 0.90, 250000, 3)
        assert not r.unstable


class TestFeedbackCost:
    def test_two_state_protocols_cost_two_bits(self):
        r = simulate("bta", Gated(), 0.3, 4000, 2)
        fc = feedback_cost("bta", r)
        assert fc.mean_bits == 2.0 and fc.max_bits == 2

    def test_counter_protocol_uses_small_words(self, sicta_near_mst):
        fc = feedback_cost("sicta", sicta_near_mst)
        assert fc.max_bits == 4
        assert set(fc.histogram) == {4}

    def test_broadcast_protocol_pays_packet_bits(self):
        r = simulate("atic", Gated(), 0.5, 20000, 42)
        fc = feedback_cost("atic", r, 256)
        assert fc.max_bits == 258
        assert 2 in fc.histogram and 258 in fc.histogram
        assert 2.0 < fc.mean_bits < 258.0


class TestWindowedAccess:
    def test_conservation_with_end_sweep(self):
        r = simulate("atic", Windowed(16.0), 0.6, 40000, 21)
        assert r.arrivals_total == r.packets_decoded + r.terminal_backlog

    def test_budget_reached_and_stable(self):
        r = simulate("atic", Windowed(16.0), 0.6, 40000, 21)
        assert r.slots_simulated >= 40000
        assert not r.unstable

    def test_saturation_cannot_beat_gated(self):
        gated = simulate("atic", Gated(), 2.0, 80000, 23)
        windowed = simulate("atic", Windowed(50.0), 2.0, 80000, 23)
        assert (throughput_estimate(windowed)
                <= throughput_estimate(gated) + 0.01)

    def test_describe_tags(self):
        assert Gated().describe() == "gated"
        assert Windowed(5.0).describe() == "windowed:5"
        assert Windowed(2.5).describe() == "windowed:2.5"


class TestSaturatedStatistics:
    def test_collision_work_ratios(self):
        targets = {"atic": 3 / (8 * math.log(2)), "sicta": 1 / (2 * math.log(2))}
        for proto, want in targets.items():
            r = simulate(proto, Gated(), 2.0, 120000, 5)
            big = [(c, n) for c, n in zip(r.collisions_per_cri, r.decoded_per_cri)
                   if n >= 1000]
            assert big, "saturated run should produce large intervals"
            ratio = sum(c for c, _ in big) / sum(n for _, n in big)
            assert ratio == pytest.approx(want, abs=0.02)

    def test_left_variant_saturation_throughput(self):
        r = simulate("atic_left", Gated(), 2.0, 120000, 9)
        assert throughput_estimate(r) == pytest.approx(6 * math.log(2) / 5, abs=0.01)
