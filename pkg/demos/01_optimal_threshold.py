"""The optimal threshold and where it stops working.

phi* is flat at L until utilization omega = 1/(ln theta + 1), then grows
exponentially until it reaches U at full utilization. Any smaller ratio
target forces a threshold that runs out of room before reaching U.
"""

import math

import numpy as np

from online_alloc import Bounds, check_sufficiency, envelope_threshold, eval_phi, make_phi_star

bounds = Bounds(1.0, math.e)
phi = make_phi_star(bounds)
print(f"theta = {bounds.theta:.4f}, alpha = {phi.alpha}, omega = {phi.omega}, phi(1) = {phi.top:.6f}")

# a few points along the curve
ys = np.linspace(0, 1, 11)
for y, v in zip(ys, eval_phi(phi, ys)):
    print(f"  phi({y:.1f}) = {v:.4f}")

# the differential condition holds with equality on the exponential segment
rep = check_sufficiency(phi, phi.alpha)
print(f"\nphi* at alpha={phi.alpha}: passed={rep.passed}, worst margin {rep.worst_margin:.2e}")

# the largest threshold a smaller alpha allows tops out below U
for alpha in (1.8, 1.9, 1.999, 2.0, 2.1):
    env = envelope_threshold(bounds, alpha)
    rep = check_sufficiency(env, alpha)
    print(f"envelope alpha={alpha:<6} phi(1)={rep.end_value:.4f}  {'pass' if rep.passed else 'fail'}")
