"""Worst-case sequences creep up from L to U.

On a geometric ladder the optimal threshold's ratio climbs toward
ln(theta) + 1 as the ladder gets finer. The knapsack mirror stacks blocks
of tiny items at the same ratios.
"""

import math

from online_alloc import Bounds, make_phi_star, run
from online_alloc.adversary import (
    eval_alg_on_worst_case,
    gen_worst_case_okp,
    gen_worst_case_otp,
    ratio_functional_r,
)
from online_alloc.oracle import opt_okp_fractional

for theta in (math.e, 20.0):
    bounds = Bounds(1.0, theta)
    target = math.log(theta) + 1
    print(f"theta = {theta:.3f}, ln theta + 1 = {target:.4f}")
    for k in (1, 2, 10, 100, 1000, 10_000):
        wc = gen_worst_case_otp(bounds, k)
        alg = eval_alg_on_worst_case(wc)
        r = ratio_functional_r(bounds, wc.rates)
        print(f"  k={k:<6} ALG={alg:.6f}  ratio={wc.rates[-1] / alg:.6f}  r_k={r:.6f}")

bounds = Bounds(1.0, math.e)
phi = make_phi_star(bounds)
for w in (1e-2, 1e-3, 1e-4):
    inst = gen_worst_case_okp(bounds, bounds.U, w).instance()
    ratio = opt_okp_fractional(inst).value / run(inst, phi).value
    print(f"knapsack ladder, item weight {w:g}: {len(inst)} items, ratio {ratio:.5f}")
