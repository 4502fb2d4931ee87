"""Cone-based user selection for two-stage multi-group MU-MIMO downlink.

Modules
-------
channel      covariance models, pre-beamformers, channel sampling
beamforming  zero-forcing precoding and power allocation
scheduling   cone selection, RBF, SUS and greedy DPC baselines
fairness     round-robin and proportional-fair wrappers
metrics      rate evaluation and feedback accounting
theory       Monte Carlo checks of the analytical bounds
harness      scenarios, Monte Carlo runs and CSV output
"""
from .beamforming import allocate_power, check_approx_bd, waterfill, zf_precoder
from .channel import (DftColumns, ExpCorrelation, GenChiSquare, GroupProfile, OneRing,
                      build_covariance, sample_channels, trial_rng)
from .metrics import evaluate_rates, rbf_transmission, tally_feedback, zf_transmission
from .scheduling import (alpha_min, greedy_dpc_select, rbf_select, redos_select,
                         sus_select)

__all__ = [
    "DftColumns", "ExpCorrelation", "OneRing", "GenChiSquare", "GroupProfile",
    "build_covariance", "sample_channels", "trial_rng",
    "allocate_power", "check_approx_bd", "waterfill", "zf_precoder",
    "alpha_min", "redos_select", "rbf_select", "sus_select", "greedy_dpc_select",
    "evaluate_rates", "rbf_transmission", "tally_feedback", "zf_transmission",
]
__version__ = "0.1.0"
