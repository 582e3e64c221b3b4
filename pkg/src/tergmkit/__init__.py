"""Temporal ERGMs for directed network panels, estimated by bootstrapped MPLE."""
from .netcore import (AttributeSpec, AttributeTable, DirectedGraph, PanelError, PanelNetwork,
                      PeriodCovariates, WeightedGraph, align_panel, threshold)
from .terms import ModelError, ModelSpec, model_from_dicts
from .statistics import change_statistics, statistics_vector
from .estimation import (EstimationError, FitResult, SingularDesignError, bootstrap_fit, fit_mple,
                         predict_tie_probability)
from .simulation import enumerate_exact, gibbs_sample, simulate_panel
from .analysis import (DyadSelector, baseline_shares, decile_curve, dyad_probability_sample,
                       mixing_matrix)

__version__ = "0.1.0"

__all__ = [
    "AttributeSpec", "AttributeTable", "DirectedGraph", "PanelError", "PanelNetwork", "PeriodCovariates",
    "WeightedGraph", "align_panel", "threshold", "ModelError", "ModelSpec", "model_from_dicts",
    "change_statistics", "statistics_vector", "EstimationError", "FitResult", "SingularDesignError",
    "bootstrap_fit", "fit_mple", "predict_tie_probability", "enumerate_exact", "gibbs_sample",
    "simulate_panel", "DyadSelector", "baseline_shares", "decile_curve", "dyad_probability_sample",
    "mixing_matrix",
]
