"""
Gradient consensus and its bootstrap interval
=============================================

Three tenants want 10, 50 and 100 Mbps and the operator prefers 55. The
side-car optimizer iterates bids to agreement, then repeats that from
jittered demands to get a 95% interval for the agreed value.
"""

import numpy as np

from symbiotic_ran.consensus import (ConsensusProblem, JitterSpec, appendix_a_consensus, bootstrap_ci,
                                     gd_consensus, stationary_point, utilities)

p = ConsensusProblem((10.0, 50.0, 100.0), x_target=55.0)
r = gd_consensus(p, record=True)
print(f"consensus {r.value:.3f} Mbps after {r.iterations} steps, converged={r.converged}")
traj = np.array(r.trajectory)
for k in (0, 10, 50, 200, len(traj) - 1):
    print(f"  step {k:4d}: bids {np.round(traj[k], 2)}")

ind, glob, comb = utilities(p, traj[-1])
print("utilities at the end:", np.round(ind, 1), round(glob, 1), round(comb, 1))
print("unclamped fixed point:", np.round(stationary_point(p), 2))

ci = bootstrap_ci(p, JitterSpec("gaussian", 5.0, seed=0), r=100)
print(f"95% interval [{ci.lower:.2f}, {ci.upper:.2f}] around {ci.mean:.2f}, sd {ci.sd:.2f}")

# the reference routine uses its own constants and a growing alignment weight
for intents, target in (([55, 55, 55], 55), ([10, 50, 100], 55), ([10, 90], 54)):
    print("reference routine", intents, target, "->", appendix_a_consensus(intents, target))
