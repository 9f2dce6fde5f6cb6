"""Blockage-aware stochastic geometry for cellular networks."""
from .estimators import BlockageModel, CoverageModel
from .link_stats import GammaModel, derive_beta_p, expected_blockages, los_probability
from .montecarlo import Scenario, estimate_connectivity, estimate_coverage, run_trials
from .network_analytics import (
    NetworkParams, QuadratureConfig, QuadratureError, average_rate, baseline_coverage_no_blockage,
    coverage_probability, mean_visible_area, mean_visible_bs, silent_fraction,
)
from .processes import BlockageParams, Constant, Exponential, Uniform, Window

__all__ = [
    "BlockageModel", "BlockageParams", "Constant", "CoverageModel", "Exponential", "GammaModel",
    "NetworkParams", "QuadratureConfig", "QuadratureError", "Scenario", "Uniform", "Window",
    "average_rate", "baseline_coverage_no_blockage", "coverage_probability", "derive_beta_p",
    "estimate_connectivity", "estimate_coverage", "expected_blockages", "los_probability",
    "mean_visible_area", "mean_visible_bs", "run_trials", "silent_fraction",
]
