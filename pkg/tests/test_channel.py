import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symbiotic_ran.channel import (ChannelTrace, LinkModel, SliceState, Simulation, TraceError,
                                   Trajectory, enforce_prb, load_trace, mcs_at, save_trace, step,
                                   step_trace, synthetic_dip_trace)


def test_capacity_is_linear_in_mcs():
    m = LinkModel()
    assert m.capacity(28) == pytest.approx(120.0)
    assert m.capacity(14) == pytest.approx(60.0)
    assert m.capacity(0) == 0.0


def test_zero_order_hold():
    tr = step_trace([(0, 28), (100, 14), (250, 7)])
    assert [mcs_at(tr, t) for t in (0, 99, 100, 249, 250, 10_000)] == [28, 28, 14, 14, 7, 7]
    with pytest.raises(ValueError):
        mcs_at(tr, -1)


@pytest.mark.parametrize("samples", [[], [(0, 29)], [(0, -1)], [(0, 5), (0, 6)], [(10, 5), (5, 6)]])
def test_bad_traces_rejected(samples):
    with pytest.raises(TraceError):
        ChannelTrace.from_samples(samples)


def test_trace_csv_round_trip(tmp_path):
    tr = synthetic_dip_trace(10_000, seed=3)
    path = tmp_path / "route.csv"
    save_trace(tr, path)
    back = load_trace(path)
    assert back.samples() == tr.samples()


def test_trace_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,m\n0,5\n")
    with pytest.raises(TraceError):
        load_trace(p)
    p.write_text("time_ms,mcs\n0,x\n")
    with pytest.raises(TraceError):
        load_trace(p)
    p.write_text("")
    with pytest.raises(TraceError):
        load_trace(p)


def test_enforcement_lands_after_reaction_delay():
    model = LinkModel()
    s = SliceState(prb_fraction=0.0, throughput=0.0, time=0)
    s = enforce_prb(s, 50.0, model)
    s = step(s, model, 28, 4)
    assert s.prb_fraction == 0.0
    s = step(s, model, 28, 1)
    assert s.prb_fraction == 50.0 and s.throughput == pytest.approx(60.0)


def test_enforce_clamps():
    model = LinkModel()
    s = enforce_prb(SliceState(), 140.0, model)
    assert s.pending_prb[0] == 100.0
    s = enforce_prb(SliceState(), -3.0, model)
    assert s.pending_prb[0] == 0.0


def test_simulation_tracks_trace_changes():
    sim = Simulation(step_trace([(0, 28), (1000, 14)]), initial_prb=50.0)
    assert sim.throughput == pytest.approx(60.0)
    sim.advance(2000)
    assert sim.now == 2000
    assert sim.throughput == pytest.approx(30.0)
    assert sim.trajectory.times == [0, 1000]
    assert sim.trajectory.end == 2000


def test_zero_delay_model_applies_immediately():
    sim = Simulation(step_trace([(0, 28)]), LinkModel(reaction_delay=0), initial_prb=0.0)
    sim.enforce(25.0)
    assert sim.prb == 25.0 and sim.throughput == pytest.approx(30.0)


def test_set_prb_now_bypasses_delay():
    sim = Simulation(step_trace([(0, 28)]), initial_prb=50.0)
    sim.enforce(80.0)
    sim.set_prb_now(0.0)
    sim.advance(10)
    assert sim.prb == 0.0


def test_link_model_validation():
    with pytest.raises(ValueError):
        LinkModel(reaction_delay=-1)
    with pytest.raises(ValueError):
        LinkModel(capacity_table={0: 10.0, 1: 5.0})
    m = LinkModel.from_config({"peak_mbps": 60, "reaction_delay_ms": 2})
    assert m.capacity(28) == 60.0 and m.reaction_delay == 2


def test_trajectory_sampling_is_zero_order_hold():
    tr = Trajectory.from_steps([0, 10], [10.0, 20.0], [1.0, 2.0], end=20)
    ts, prb, tp = tr.sample(0, 20, 5)
    assert ts.tolist() == [0, 5, 10, 15]
    assert tp.tolist() == [1.0, 1.0, 2.0, 2.0]
    with pytest.raises(ValueError):
        tr.sample(-5, 5, 5)


def test_synthetic_dip_has_a_dip():
    tr = synthetic_dip_trace(60_000, high=24, low=10, seed=1)
    mid = [mcs_at(tr, t) for t in range(21_000, 39_000, 500)]
    edge = [mcs_at(tr, t) for t in range(0, 19_000, 500)]
    assert np.mean(mid) < np.mean(edge) - 8
    assert synthetic_dip_trace(60_000, seed=1).samples() == tr.samples()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 50), st.floats(-50, 150)), min_size=1, max_size=20))
def test_prb_always_in_range(commands):
    sim = Simulation(synthetic_dip_trace(5_000, seed=0), initial_prb=30.0)
    for dt, target in commands:
        sim.enforce(target)
        sim.advance(dt)
        assert 0.0 <= sim.prb <= 100.0
        assert sim.throughput == pytest.approx(sim.capacity() * sim.prb / 100.0)
