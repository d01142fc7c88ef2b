"""Multivariate Bayesian structural time series with lagged predictors.

Structural state-space modeling of correlated series with spike-and-slab
predictor selection, segmented training with lag alignment, one-step-ahead
prediction, normalized absolute error scoring, and grid-search tuning.
"""

from .components import ComponentSpec, CovarianceSet, StateSpaceModel, build_state_space
from .data import IntegrityError, PanelDataset, SyntheticConfig, \
    build_weekly_panel, fetch_public_sources, generate_synthetic, load_panel_csv
from .kalman import HAVE_EXT, FilterResult, SingularInnovationError, SmootherResult, \
    kalman_filter, kalman_smoother, simulate_forward, simulate_states
from .priors import InverseWishartPrior, SpikeSlabPrior, draw_beta_and_indicators, \
    draw_inverse_wishart
from .sampler import McmcConfig, ModelPriors, PosteriorDraws, coefficient_summary, \
    default_priors, run_mcmc
from .tuning import HyperGrid, LagSpec, PartitionPlan, SegmentFit, TuneReport, \
    bsts_tl_baseline, fit_segment, grid_search, lag_align, normalized_ae

__version__ = "0.1.0"

__all__ = [
    "ComponentSpec", "CovarianceSet", "StateSpaceModel", "build_state_space",
    "IntegrityError", "PanelDataset", "SyntheticConfig",
    "build_weekly_panel", "fetch_public_sources",
    "generate_synthetic", "load_panel_csv",
    "HAVE_EXT", "FilterResult", "SmootherResult", "SingularInnovationError",
    "kalman_filter", "kalman_smoother", "simulate_forward", "simulate_states",
    "InverseWishartPrior", "SpikeSlabPrior", "draw_beta_and_indicators",
    "draw_inverse_wishart",
    "McmcConfig", "ModelPriors", "PosteriorDraws", "coefficient_summary",
    "default_priors", "run_mcmc",
    "HyperGrid", "LagSpec", "PartitionPlan", "SegmentFit", "TuneReport",
    "bsts_tl_baseline", "fit_segment", "grid_search", "lag_align", "normalized_ae",
    "__version__",
]
