"""Five binary default-prediction families behind ``FittedModel.predict_proba``."""

from .base import FittedModel, load_model, model_from_dict, predict_proba, save_model
from .fann import FANNConfig, FeedforwardNet, fit_fann, fit_fann_arrays
from .gbt import GBTConfig, Tree, TreeEnsemble, fit_gbt, fit_gbt_arrays
from .linear import LinearBinaryModel, LinearConfig, fit_binary_glm, fit_linear

FAMILIES = ("fann", "gbt", "gev", "lr", "probit")

__all__ = [
    "FAMILIES",
    "FANNConfig",
    "FeedforwardNet",
    "FittedModel",
    "GBTConfig",
    "LinearBinaryModel",
    "LinearConfig",
    "Tree",
    "TreeEnsemble",
    "fit_binary_glm",
    "fit_fann",
    "fit_fann_arrays",
    "fit_gbt",
    "fit_gbt_arrays",
    "fit_linear",
    "load_model",
    "model_from_dict",
    "predict_proba",
    "save_model",
]
