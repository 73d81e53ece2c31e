"""
Channel playback and the proportional PRB loop
==============================================

A slice is driven by an MCS trace. We enforce one throughput intent at a
few gains and count how many control steps each needs.
"""

import numpy as np

from symbiotic_ran.channel import LinkModel, Simulation, step_trace, synthetic_dip_trace
from symbiotic_ran.pcontrol import Intent, PControlConfig, enforce_intent

# capacity grows linearly with MCS: 120 Mbps at MCS 28
model = LinkModel()
print("capacity at MCS 28, 14, 7:", [model.capacity(m) for m in (28, 14, 7)])

# --- one enforcement per gain, same starting point ---
intent = Intent(50.0, tolerance=4.0)
for kp in (0.1, 0.3, 0.75, 1.5):
    sim = Simulation(step_trace([(0, 28)]), model, initial_prb=0.0)
    r = enforce_intent(sim, intent, PControlConfig(kp))
    print(f"kp={kp:<4}  iterations={r.iterations:<3}  final {r.final_throughput:6.2f} Mbps")

# the step response at kp=0.3, one row per 5 ms control step
sim = Simulation(step_trace([(0, 28)]), model, initial_prb=0.0)
r = enforce_intent(sim, intent, PControlConfig(0.3))
for t, prb, tp in r.trajectory:
    print(f"  t={t:3d} ms  prb={prb:6.2f}%  throughput={tp:6.2f}")

# --- a vehicle-route-like trace with a coverage dip ---
trace = synthetic_dip_trace(60_000, seed=0)
mcs = np.array(trace.mcs)
print(f"route: {len(trace)} MCS changes, mean MCS {mcs.mean():.1f}, min {mcs.min()}, max {mcs.max()}")
