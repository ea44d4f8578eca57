"""Default-prediction models for SMEs with model-agnostic interpretation.

Five classifiers (logit, probit, GEV-link regression, gradient-boosted trees,
a one-hidden-layer network) are tuned by Monte Carlo cross-validation on
undersampled training data, scored by sensitivity, specificity, AUC and the
H-measure, and explained with accumulated local effects, partial dependence
and Shapley values.
"""

__version__ = "0.1.0"
