"""Model-agnostic interpretation: ALE, partial dependence and Shapley values."""

from .ale import ALECurve, PDCurve, ale_bootstrap, ale_curve, as_predictor, pd_curve, quantile_boundaries
from .shapley import ShapleyConfig, ShapleySummary, coalition_values, global_shapley, shapley_instance

__all__ = [
    "ALECurve",
    "PDCurve",
    "ShapleyConfig",
    "ShapleySummary",
    "ale_bootstrap",
    "ale_curve",
    "as_predictor",
    "coalition_values",
    "global_shapley",
    "pd_curve",
    "quantile_boundaries",
    "shapley_instance",
]
