"""Closed-form binary error probability and its confidence half-width."""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .core import ErrorEstimate, FewShotTask, project_to_class_subspace
from .estimators import CovarianceVariant, corrected_distance_matrix, fit_covariance

NORMAL_PDF_AT_ZERO = 1.0 / math.sqrt(2.0 * math.pi)


def std_normal_cdf(x):
    return special.ndtr(x)


def std_normal_quantile(p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("quantile requires p in (0, 1)")
    out = special.ndtri(p)
    return float(out) if out.ndim == 0 else out


def binary_error_probability(r, sigma):
    """1 - Phi(r / (2 sigma)) for two equiprobable isotropic Gaussians whose
    centers are ``r`` apart. Broadcasts."""
    sigma = np.asarray(sigma, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    # ndtr(-x) keeps precision in the far tail where 1 - ndtr(x) cancels
    out = special.ndtr(-r / (2.0 * sigma))
    return float(out) if out.ndim == 0 else out


def lemma1_bound(k, alpha: float = 0.05):
    """Half-width eps with P(|P_e - P_e_hat| <= eps) >= 1 - alpha when the
    shared standard deviation is known."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    k = np.asarray(k, dtype=float)
    if np.any(k < 1):
        raise ValueError("k must be >= 1")
    z = abs(special.ndtri(1.0 - alpha / 2.0))
    out = NORMAL_PDF_AT_ZERO * z / np.sqrt(2.0 * k)
    return float(out) if out.ndim == 0 else out


def binary_predict(task: FewShotTask, alpha: float = 0.05, correct: bool = True) -> ErrorEstimate:
    """Analytic prediction for a two-class task.

    The distance comes from the (optionally) bias-corrected squared
    distance in the original space; sigma is the pooled isotropic fit in
    the one-dimensional class subspace.
    """
    if task.n_ways != 2:
        raise ValueError("analytic path requires two classes")
    variant = CovarianceVariant.SHARED_ISOTROPIC
    bound = lemma1_bound(task.k_shots, alpha)
    dist = corrected_distance_matrix(task, variant, correct=correct)

    means = [b.mean(axis=0) for b in task.support_by_class.values()]
    if np.array_equal(means[0], means[1]):
        p = 0.5
    else:
        proj = project_to_class_subspace(task)
        sigma2 = fit_covariance(proj.support_proj.by_class(), variant).variances[task.classes[0]]
        r_hat = math.sqrt(dist.squared[0, 1])
        if sigma2 > 0:
            p = binary_error_probability(r_hat, math.sqrt(sigma2))
        else:
            p = 0.0
    return ErrorEstimate(float(p), "analytic", bound_half_width=bound,
                         variant=variant.value, corrected=correct)
