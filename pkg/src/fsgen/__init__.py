"""Predicting nearest-class-mean few-shot accuracy from the support set alone."""

from .analytic import binary_error_probability, binary_predict, lemma1_bound
from .baselines import (DbCalibration, calibrate_db_regression, davies_bouldin_index,
                        loo_cross_validation, predict_accuracy_db)
from .core import (ErrorEstimate, FeatureSet, FewShotTask, fit_class_means, ncm_classify,
                   ncm_predict, project_to_class_subspace)
from .estimators import (CovarianceModel, CovarianceVariant, corrected_distance_matrix,
                         fit_covariance, naive_squared_distance, select_covariance_model,
                         unbiased_squared_distance)
from .mds import CenterConfiguration, embed_centers
from .metrics import gaussian_kl, mape, model_selection_experiment, roc_curve
from .montecarlo import MonteCarloConfig, estimate_error_monte_carlo, predict_accuracy

__all__ = [
    "CenterConfiguration", "CovarianceModel", "CovarianceVariant", "DbCalibration",
    "ErrorEstimate", "FeatureSet", "FewShotTask", "MonteCarloConfig",
    "binary_error_probability", "binary_predict", "calibrate_db_regression",
    "corrected_distance_matrix", "davies_bouldin_index", "embed_centers",
    "estimate_error_monte_carlo", "fit_class_means", "fit_covariance", "gaussian_kl",
    "lemma1_bound", "loo_cross_validation", "mape", "model_selection_experiment",
    "naive_squared_distance", "ncm_classify", "ncm_predict", "predict_accuracy",
    "predict_accuracy_db", "project_to_class_subspace", "roc_curve",
    "select_covariance_model", "unbiased_squared_distance",
]
