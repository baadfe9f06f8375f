"""Monte Carlo experiment harness: scenarios, runners, SNR metrics, oracles."""
from .experiment import (ResultRow, ResultTable, emit_results, make_input,
                         read_results, run_experiment, snr, upper_bound_snr)
from .oracles import (MCNoisePower, enum_expected_sms, grid_search_feedback,
                      mc_expected_sms, mc_mean_shift, mc_noise_power)
from .scenario import Scenario
from .validate import run_suites

__all__ = [
    "MCNoisePower", "ResultRow", "ResultTable", "Scenario",
    "emit_results", "enum_expected_sms", "grid_search_feedback",
    "make_input", "mc_expected_sms", "mc_mean_shift", "mc_noise_power",
    "read_results", "run_experiment", "run_suites", "snr", "upper_bound_snr",
]
