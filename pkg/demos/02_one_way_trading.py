"""One-way trading: convert a unit budget as rates arrive.

The threshold algorithm spends just enough at each new high so that the
threshold at its new utilization equals the rate. We compare it with the
shipped baselines on a handful of random sequences.
"""

import math

import numpy as np

from online_alloc import Bounds, gen_random_instance, make_phi_star, opt_otp, run
from online_alloc.engine import BASELINE_NAMES, make_baseline, run_baseline

bounds = Bounds(1.0, math.e)
phi = make_phi_star(bounds)

inst = gen_random_instance(bounds, 12, "uniform-rate", seed=3)
trace = run(inst, phi)
print("rate    spend   utilization")
for b, x, y in zip(inst.rates, trace.decisions, trace.utilization):
    print(f"{b:.4f}  {x:.4f}  {y:.4f}")
print(f"ALG = {trace.value:.4f}, OPT = {opt_otp(inst).value:.4f}")

# worst ratio over 200 sequences per distribution, for every baseline
print("\nworst OPT/ALG over 200 random sequences")
rng = np.random.default_rng(0)
corpus = [gen_random_instance(bounds, int(rng.integers(1, 300)), d, seed=int(rng.integers(2**32)))
          for d in ("uniform-rate", "spike", "monotone") for _ in range(200)]
for name in BASELINE_NAMES:
    algo = make_baseline(name, bounds)
    ratios = []
    for inst in corpus:
        v = run_baseline(inst, algo).value
        ratios.append(opt_otp(inst).value / v if v > 0 else math.inf)
    print(f"  {name:<20} {max(ratios):.4f}")
