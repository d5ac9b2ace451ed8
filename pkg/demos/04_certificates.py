"""Auditing a run with a primal-dual certificate.

For every run we build dual values alongside the primal ones and check
the initial inequality, each incremental one and weak duality. A
threshold that is too steep for the claimed ratio shows up as violations.
"""

import math

from online_alloc import Bounds, certify, envelope_threshold, gen_random_instance, make_phi_star, run
from online_alloc.adversary import gen_worst_case_otp
from online_alloc.oracle import opt_okp_fractional, opt_otp

bounds = Bounds(1.0, math.e)
phi = make_phi_star(bounds)

inst = gen_random_instance(bounds, 400, "uniform-rate", seed=11)
rep = certify(run(inst, phi), phi, opt_otp(inst).value)
print(f"OTP: passed={rep.passed}, k={rep.k}, worst margin {rep.worst_margin:.2e}, "
      f"alpha*ALG={rep.alpha * rep.alg_value:.4f} >= OPT={rep.opt_value:.4f}")

okp = gen_random_instance(bounds, 20000, "uniform-rate", seed=2, problem="okp", max_weight=1e-4)
rep = certify(run(okp, phi), phi, opt_okp_fractional(okp).value)
print(f"OKP: passed={rep.passed}, construction={rep.construction}, "
      f"slack used {rep.slack_consumed:.2e} of {rep.slack_budget:.2e}")

# claiming a better ratio than the threshold supports
ladder = gen_worst_case_otp(bounds, 500).instance()
rep = certify(run(ladder, phi), phi, opt_otp(ladder).value, alpha=1.95)
print(f"phi* audited at alpha=1.95: passed={rep.passed}, {rep.violations} violations")

steep = envelope_threshold(bounds, 2.5)
rep = certify(run(ladder, steep), steep, opt_otp(ladder).value, alpha=2.0)
print(f"steeper threshold at alpha=2.0: passed={rep.passed}, {rep.violations} violations")
print("\n" + rep.to_json())
