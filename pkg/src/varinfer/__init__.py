"""Estimation and inference for VARs observed with additive measurement error."""

from .dantzig import DantzigProblem, dantzig_matrix, dantzig_row
from .em import CvResult, EmConfig, EmDiagnostics, cross_validate_tau, em_fit, initialize, mstep_exact, standard_em_fit, update_variances
from .experiments import Scenario, StudyConfig, StudyReport, run_estimation_study, run_fdr_study, run_global_study
from .inference import FdrResult, GlobalResult, TestMatrix, fdr_select, global_test, norm_cdf, norm_ppf, residuals, sigma_hat, test_matrix
from .kalman import SmoothedMoments, exact_condition, kalman_smooth, log_likelihood
from .model import Dataset, HypothesisSpec, ModelParams, NonStationaryError, companion_embed, spectral_norm, spectral_rescale, stationary_covariance
from .simplex import InfeasibleError, UnboundedError, solve_lp
from .simulate import NetworkSpec, SimConfig, gen_data, gen_structure

__version__ = "0.1.0"

__all__ = [
    "CvResult", "DantzigProblem", "Dataset", "EmConfig", "EmDiagnostics",
    "FdrResult", "GlobalResult", "HypothesisSpec", "InfeasibleError",
    "ModelParams", "NetworkSpec", "NonStationaryError", "Scenario",
    "SimConfig", "SmoothedMoments", "StudyConfig", "StudyReport",
    "TestMatrix", "UnboundedError", "companion_embed", "cross_validate_tau",
    "dantzig_matrix", "dantzig_row", "em_fit", "exact_condition",
    "fdr_select", "gen_data", "gen_structure", "global_test", "initialize",
    "kalman_smooth", "log_likelihood", "mstep_exact", "norm_cdf", "norm_ppf",
    "residuals", "run_estimation_study", "run_fdr_study", "run_global_study",
    "sigma_hat", "solve_lp", "spectral_norm", "spectral_rescale",
    "standard_em_fit", "stationary_covariance", "test_matrix",
    "update_variances",
]
