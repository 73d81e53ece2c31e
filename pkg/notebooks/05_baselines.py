"""
Comparison controllers
======================

Tabular Q-learning and a GP-surrogate PRB search follow the same contract
as the P-controller: each probe is a PRB command that lands after 5 ms.
"""

import numpy as np

from symbiotic_ran.baselines import BayesOptConfig, QLearnConfig, QLearner, bayes_enforce, qlearn_enforce
from symbiotic_ran.channel import Simulation, step_trace
from symbiotic_ran.pcontrol import ControlLoop, Intent, PControlConfig, pcontrol_enforcer

intent = Intent(40.0, 5.0)
trace = step_trace([(0, 28), (10_000, 14)])
learner = QLearner(QLearnConfig(seed=0))
designs = {
    "p-control kp=0.75": pcontrol_enforcer(PControlConfig(0.75)),
    "q-learning": lambda s, i: qlearn_enforce(s, i, learner=learner),
    "bayes-opt": lambda s, i: bayes_enforce(s, i, BayesOptConfig()),
}
for name, enforcer in designs.items():
    sim = Simulation(trace, initial_prb=0.0)
    loop = ControlLoop(sim, enforcer)
    loop.set_intent(intent)
    loop.run_until(20_000)
    its = [r.iterations for r in loop.results]
    print(f"{name:<18} enforcements {len(its)}  iterations {its}  mean {np.mean(its):.1f}")

# the surrogate search overshoots on its way in
sim = Simulation(step_trace([(0, 28)]), initial_prb=0.0)
r = bayes_enforce(sim, Intent(20.0, 2.0))
print("bayes probes (prb %):", [round(p, 1) for _, p, _ in r.trajectory])
