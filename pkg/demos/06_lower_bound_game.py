"""No deterministic algorithm beats ln(theta) + 1.

The adversary raises the rate step by step and ends the sequence as soon
as the opponent has spent less than the optimal threshold would have.
Underspending leaves value on the table; never underspending means the
opponent spent its budget at low rates.
"""

import math

from online_alloc import Bounds
from online_alloc.adversary import play_lower_bound_game
from online_alloc.engine import BASELINE_NAMES, make_baseline

for theta in (math.e, 10.0):
    bounds = Bounds(1.0, theta)
    print(f"theta = {theta:.3f}, bound {math.log(theta) + 1:.4f}")
    for name in BASELINE_NAMES:
        t = play_lower_bound_game(make_baseline(name, bounds), bounds, 10_000)
        print("  " + t.summary())
