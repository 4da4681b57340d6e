import numpy as np
import pytest

from dmimochan.geometry import LinkState, Trajectory
from dmimochan.link_state import (LinkStateError, LinkStateTrace,
                                  TransitionModel, count_los_links,
                                  draw_transition_model,
                                  estimate_transition_rate, read_trace_csv,
                                  run_lengths, simulate_states,
                                  write_trace_csv)

from oracles import exponential_ks_distance, ks_critical_value


def straight(length_m, speed=1.0, rate=200.0):
    return Trajectory.straight_line([0, 0, 1], [length_m, 0, 1], speed, rate,
                                    max_speed=speed + 1)


class TestTypes:
    def test_trace_validation(self):
        trace = LinkStateTrace(np.zeros((2, 5), dtype=int))
        assert trace.num_anchors == 2 and trace.num_snapshots == 5
        with pytest.raises(LinkStateError):
            LinkStateTrace(np.full((2, 5), 7))
        cov = np.full((2, 5), 10.0)
        LinkStateTrace(np.zeros((2, 5), dtype=int), cov)  # 10% -> LoS, consistent
        with pytest.raises(LinkStateError):
            LinkStateTrace(np.ones((2, 5), dtype=int), cov)  # labeled OLoS

    def test_model_bounds(self):
        TransitionModel(np.array([0.04, 0.22]))
        with pytest.raises(LinkStateError):
            TransitionModel(np.array([0.3]))


class TestDrawTransitionModel:
    def test_draws_inside_bounds(self, rng):
        model = draw_transition_model(rng, 100_000)
        assert model.rates.min() >= 0.04
        assert model.rates.max() <= 0.22

    def test_uniform_mean(self, rng):
        model = draw_transition_model(rng, 100_000)
        assert abs(model.rates.mean() - 0.13) < 0.005

    def test_degenerate_bounds(self, rng):
        model = draw_transition_model(rng, 10, bounds=(0.1, 0.1))
        assert np.allclose(model.rates, 0.1)


class TestSimulateStates:
    def test_no_movement_keeps_states(self, rng):
        pos = np.tile([1.0, 2.0, 1.0], (50, 1))
        tr = Trajectory(pos, 200.0)
        model = TransitionModel(np.full(3, 0.22))
        init = np.array([0, 1, 0], dtype=np.int8)
        trace = simulate_states(rng, model, tr, init)
        assert np.all(trace.states == init[:, None])

    def test_reproducible(self):
        tr = straight(100.0)
        model = TransitionModel(np.full(4, 0.13))
        t1 = simulate_states(np.random.default_rng(7), model, tr)
        t2 = simulate_states(np.random.default_rng(7), model, tr)
        assert np.array_equal(t1.states, t2.states)

    def test_mean_run_matches_paper_rate(self):
        # lambda = 0.215/m -> mean run 4.65 m
        tr = straight(3000.0, speed=1.0)
        model = TransitionModel(np.full(4, 0.215))
        trace = simulate_states(np.random.default_rng(3), model, tr)
        runs = run_lengths(trace, tr)
        assert runs.size > 400
        assert abs(runs.mean() - 4.65) / 4.65 < 0.05

    def test_mean_run_derived(self):
        tr = straight(6000.0, speed=1.0, rate=100.0)
        model = TransitionModel(np.full(4, 0.2))
        trace = simulate_states(np.random.default_rng(11), model, tr)
        runs = run_lengths(trace, tr)
        assert runs.size >= 2000
        assert abs(runs.mean() - 5.0) / 5.0 < 0.05

    def test_run_length_ks_against_exponential(self):
        # property: run lengths are Exponential(lambda) at the 1% level
        lam = 0.13
        tr = straight(8000.0, speed=1.0, rate=100.0)
        model = TransitionModel(np.full(12, lam))
        trace = simulate_states(np.random.default_rng(5), model, tr)
        runs = run_lengths(trace, tr)
        assert runs.size >= 10_000
        runs = runs[:10_000]
        d = exponential_ks_distance(runs, lam)
        assert d < ks_critical_value(runs.size, alpha=0.01)


class TestEstimateTransitionRate:
    def test_constant_states(self):
        tr = straight(10.0)
        trace = LinkStateTrace(np.zeros((2, tr.num_snapshots), dtype=int))
        assert np.allclose(estimate_transition_rate(trace, tr), 0.0)

    def test_alternating_every_5m(self):
        tr = straight(100.0, speed=1.0, rate=10.0)  # 0.1 m per snapshot
        cum = tr.cumulative_distance
        states = ((cum // 5.0) % 2).astype(int)[None, :]
        trace = LinkStateTrace(states)
        rate = estimate_transition_rate(trace, tr)[0]
        assert abs(rate - 0.2) < 0.011  # 19 flips over 100 m within quantization

    def test_round_trip(self):
        lam = 0.13
        tr = straight(1000.0, speed=1.0, rate=100.0)
        model = TransitionModel(np.full(6, lam))
        trace = simulate_states(np.random.default_rng(9), model, tr)
        rates = estimate_transition_rate(trace, tr)
        assert abs(rates.mean() - lam) / lam < 0.15

    def test_zero_distance_errors(self):
        pos = np.tile([0.0, 0.0, 1.0], (5, 1))
        tr = Trajectory(pos, 200.0)
        trace = LinkStateTrace(np.zeros((1, 5), dtype=int))
        with pytest.raises(LinkStateError):
            estimate_transition_rate(trace, tr)


class TestCountLosLinks:
    def test_all_los(self):
        trace = LinkStateTrace(np.zeros((12, 4), dtype=int))
        assert np.all(count_los_links(trace) == 12)

    def test_all_olos(self):
        trace = LinkStateTrace(np.ones((12, 4), dtype=int))
        assert np.all(count_los_links(trace) == 0)

    def test_median_six_of_twelve(self):
        # symmetric occupancy: median simultaneous-LoS count is six
        tr = straight(2000.0, speed=1.0, rate=50.0)
        rng = np.random.default_rng(21)
        model = draw_transition_model(rng, 12)
        trace = simulate_states(rng, model, tr)
        counts = count_los_links(trace)
        assert 5 <= np.median(counts) <= 7


class TestCsv:
    def test_roundtrip(self, tmp_path):
        states = np.array([[0, 1, 1], [1, 0, 0]], dtype=np.int8)
        coverage = np.array([[10.0, 80.0, 60.0], [55.0, 20.0, 50.0]])
        trace = LinkStateTrace(states, coverage)
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, path)
        text = path.read_text().splitlines()
        assert text[0] == "snapshot,anchor,state,coverage"
        assert text[1].startswith("0,0,LOS,")
        again = read_trace_csv(path)
        assert np.array_equal(again.states, states)
        assert np.allclose(again.coverage, coverage)
