"""Adaptive Bayesian estimation of a rotation angle and fringe visibilities
with multi-resolution photonic probes."""
__version__ = "0.1.0"

from .bounds import BoundSpec, fisher_matrix, reference_curves, solve_C_G, xi_constant
from .calibration import FrequencyRecord, load_si_table, visibility_estimate
from .design import WeightMatrix, evaluate_candidates, greedy_select
from .harness import CampaignConfig, run_campaign, run_estimation
from .model import S_VALUES, Basis, ControlSetting, ExperimentRecord, ParameterPoint, RunRecord
from .particles import Ensemble, bayes_update, init_prior, posterior_mean, resample, summarize

__all__ = [
    "S_VALUES", "Basis", "BoundSpec", "CampaignConfig", "ControlSetting", "Ensemble",
    "ExperimentRecord", "FrequencyRecord", "ParameterPoint", "RunRecord", "WeightMatrix",
    "bayes_update", "evaluate_candidates", "fisher_matrix", "greedy_select", "init_prior",
    "load_si_table", "posterior_mean", "reference_curves", "resample", "run_campaign",
    "run_estimation", "solve_C_G", "summarize", "visibility_estimate", "xi_constant",
]
