"""Threshold-based online algorithms for one-way trading and the online
knapsack, with offline oracles, primal-dual certificates and adversarial
worst-case instances."""

from .adversary import (
    AdversaryTranscript,
    WorstCaseOkp,
    WorstCaseOtp,
    eval_alg_on_worst_case,
    gen_random_instance,
    gen_worst_case_okp,
    gen_worst_case_otp,
    play_lower_bound_game,
    ratio_functional_r,
)
from .certificate import CertificateReport, DualAssignment, audit, build_dual_okp, build_dual_otp, certify
from .engine import (
    AlgorithmState,
    OnlineAlgorithm,
    make_baseline,
    okp_step,
    otp_step,
    run,
    run_baseline,
)
from .model import Bounds, OkpInstance, OtpInstance, Trace, load_instance, save_instance
from .oracle import OfflineResult, opt_okp_exact, opt_okp_fractional, opt_otp
from .threshold import (
    SufficiencyReport,
    ThresholdFunction,
    check_sufficiency,
    envelope_threshold,
    eval_phi,
    gronwall_envelope,
    invert_phi,
    make_phi_star,
    min_alpha_feasible,
)

__version__ = "0.1.0"
