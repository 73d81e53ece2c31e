import numpy as np
import pytest

from symbiotic_ran.baselines import (BayesOptConfig, GpSurrogate, QLearnConfig, QLearner, bayes_enforce,
                                     next_probe, qlearn_enforce)
from symbiotic_ran.channel import LinkModel, Simulation, step_trace
from symbiotic_ran.pcontrol import ControlLoop, Intent, PControlConfig, enforce_intent


def _sim(segments=((0, 28),), prb=0.0):
    return Simulation(step_trace(list(segments)), LinkModel(), initial_prb=prb)


def test_qlearning_converges_on_stationary_channel():
    sim = _sim()
    learner = QLearner(QLearnConfig(seed=1))
    intent = Intent(40.0, 5.0)
    iters = []
    for k in range(30):
        sim.set_prb_now(0.0 if k % 2 == 0 else 80.0)
        r = qlearn_enforce(sim, intent, learner=learner)
        assert r.converged
        iters.append(r.iterations)
    assert np.mean(iters[-10:]) < np.mean(iters[:10])


def test_qlearning_reexplores_after_channel_drop():
    sim = _sim([(0, 28), (10_000, 14)])
    learner = QLearner(QLearnConfig(seed=2))
    loop = ControlLoop(sim, lambda s, i: qlearn_enforce(s, i, learner=learner))
    loop.set_intent(Intent(40.0, 5.0))
    loop.run_until(20_000)
    after = [r for r in loop.results if r.start_time >= 10_000]
    assert after, "the drop must push throughput out of band"
    assert after[0].iterations > 1
    assert Intent(40.0, 5.0).contains(sim.throughput)


def test_zero_action_never_moves():
    sim = _sim(prb=10.0)
    r = qlearn_enforce(sim, Intent(60.0), QLearnConfig(actions=(0.0,), max_iterations=10))
    assert not r.converged and all(p == 10.0 for _, p, _ in r.trajectory)


def test_qlearn_config_validation():
    with pytest.raises(ValueError):
        QLearnConfig(actions=())
    with pytest.raises(ValueError):
        QLearnConfig(epsilon=1.5)


def test_bayes_cold_start_probes_midpoint():
    cfg = BayesOptConfig(prb_bounds=(20.0, 80.0))
    assert next_probe(GpSurrogate(20, 40, 0.5), Intent(50.0), cfg) == 50.0


def test_bayes_overshoots_and_converges():
    sim = _sim()
    r = bayes_enforce(sim, Intent(20.0, 2.0), BayesOptConfig(budget=20))
    assert r.converged and r.iterations <= 20
    prbs = [p for _, p, _ in r.trajectory]
    diffs = np.diff(prbs)
    assert (diffs > 0).any() and (diffs < 0).any(), "probe sequence should not be monotone"


def test_bayes_trivial_band_one_probe():
    r = bayes_enforce(_sim(), Intent(60.0, 60.0))
    assert r.iterations == 1 and r.converged


def test_bayes_budget_exhaustion():
    r = bayes_enforce(_sim([(0, 2)]), Intent(90.0, 1.0), BayesOptConfig(budget=3))
    assert not r.converged and r.iterations == 3


def test_gp_interpolates_observations():
    gp = GpSurrogate(20.0, 40.0, 0.01)
    for x in (10.0, 50.0, 90.0):
        gp.add(x, 1.2 * x)
    mu, sd = gp.predict(np.array([10.0, 50.0, 90.0]))
    assert mu == pytest.approx([12.0, 60.0, 108.0], abs=0.1)
    assert (sd < 0.1).all()


def test_tuned_pcontrol_beats_baselines_on_iterations():
    intent = Intent(30.0, 3.0)
    p = enforce_intent(_sim(), intent, PControlConfig(0.75)).iterations
    b = bayes_enforce(_sim(), intent).iterations
    q = qlearn_enforce(_sim(), intent, QLearnConfig(seed=0)).iterations
    assert p < b and p < q
