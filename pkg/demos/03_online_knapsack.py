"""Online knapsack with small items.

The same threshold decides whether each item's value-per-weight beats the
price of the capacity already used. Offline, the fractional relaxation is
an upper bound and the dynamic program gives the exact 0-1 optimum.
"""

import math

import numpy as np

from online_alloc import Bounds, OkpInstance, gen_random_instance, make_phi_star, run
from online_alloc.oracle import opt_okp_exact, opt_okp_fractional

bounds = Bounds(1.0, math.e)
phi = make_phi_star(bounds)

inst = gen_random_instance(bounds, 5000, "log-uniform-rate", seed=1, problem="okp", max_weight=1e-3)
trace = run(inst, phi)
frac = opt_okp_fractional(inst).value
print(f"{len(inst)} items, accepted {trace.accepted.sum()}, utilization {trace.final_utilization:.4f}")
print(f"ALG = {trace.value:.4f}, fractional OPT = {frac:.4f}, ratio {frac / trace.value:.4f}")

# the two oracles agree up to one item's value
rng = np.random.default_rng(7)
n = 40
small = OkpInstance(bounds, rng.uniform(1, math.e, n), rng.integers(1, 120, n) * 1e-3)
exact = opt_okp_exact(small, 1e-3).value
frac = opt_okp_fractional(small).value
print(f"\nexact {exact:.4f} <= fractional {frac:.4f} <= exact + U*max w = "
      f"{exact + bounds.U * small.max_weight:.4f}")

# coarse items are allowed but flagged
coarse = gen_random_instance(bounds, 10, "uniform-rate", seed=0, problem="okp", max_weight=0.3)
print(f"\nmax weight {coarse.max_weight:.3f}: infinitesimal = {coarse.is_infinitesimal}")
