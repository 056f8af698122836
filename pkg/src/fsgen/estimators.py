"""Covariance model variants, model selection and inter-center distance
estimators (naive and bias-corrected)."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .core import FewShotTask, Label, canonical_labels, fit_class_means

RIDGE_SCALE = 1e-6


class CovarianceVariant(str, enum.Enum):
    IDENTITY = "identity"
    SHARED_ISOTROPIC = "shared-iso"
    ISOTROPIC_PER_CLASS = "iso-per-class"
    FULL_PER_CLASS = "full"

    @property
    def estimates_variance(self) -> bool:
        return self is not CovarianceVariant.IDENTITY


def select_covariance_model(n: int, k: int, override=None) -> CovarianceVariant:
    """Shared isotropic covariance while k <= (n-1)**2, full per-class
    covariance beyond that. ``override`` (a variant or its name, "auto"
    meaning no override) wins when given."""
    if override is not None and override != "auto":
        return CovarianceVariant(override)
    if n < 2 or k < 1:
        raise ValueError(f"need n >= 2 and k >= 1, got n={n}, k={k}")
    if k <= (n - 1) ** 2:
        return CovarianceVariant.SHARED_ISOTROPIC
    return CovarianceVariant.FULL_PER_CLASS


@dataclass(frozen=True)
class CovarianceModel:
    variant: CovarianceVariant
    dim: int
    variances: dict  # label -> per-dimension variance (isotropic variants)
    matrices: Optional[dict] = None  # label -> (dim, dim), full variant only

    @property
    def labels(self) -> tuple:
        return canonical_labels(self.variances)

    @property
    def is_isotropic(self) -> bool:
        return self.matrices is None

    def matrix(self, label) -> np.ndarray:
        if self.matrices is not None:
            return self.matrices[label]
        return self.variances[label] * np.eye(self.dim)

    def trace(self, label) -> float:
        if self.matrices is not None:
            return float(np.trace(self.matrices[label]))
        return self.dim * float(self.variances[label])


def _scatter(block: np.ndarray) -> float:
    dev = block - block.mean(axis=0)
    return float(np.sum(dev * dev))


def fit_covariance(support_by_class: Mapping[Label, np.ndarray], variant) -> CovarianceModel:
    """Fit one of the four covariance variants with k-1 denominators.

    The full variant gets a ridge of 1e-6 * trace/d so its matrices stay
    positive definite at small k.
    """
    variant = CovarianceVariant(variant)
    labels = canonical_labels(support_by_class)
    blocks = {c: np.atleast_2d(np.asarray(support_by_class[c], dtype=float)) for c in labels}
    dim = next(iter(blocks.values())).shape[1]

    if variant is CovarianceVariant.IDENTITY:
        return CovarianceModel(variant, dim, {c: 1.0 for c in labels})

    for c, b in blocks.items():
        if b.shape[0] < 2:
            raise ValueError(f"insufficient samples for covariance (class {c!r} has {b.shape[0]})")

    per_class = {c: _scatter(b) / ((b.shape[0] - 1) * dim) for c, b in blocks.items()}
    if variant is CovarianceVariant.ISOTROPIC_PER_CLASS:
        return CovarianceModel(variant, dim, per_class)
    if variant is CovarianceVariant.SHARED_ISOTROPIC:
        shared = float(np.mean(list(per_class.values())))
        return CovarianceModel(variant, dim, {c: shared for c in labels})

    matrices = {}
    for c, b in blocks.items():
        cov = np.atleast_2d(np.cov(b, rowvar=False, ddof=1))
        cov = 0.5 * (cov + cov.T)
        cov += RIDGE_SCALE * np.trace(cov) / dim * np.eye(dim)
        matrices[c] = cov
    return CovarianceModel(variant, dim, per_class, matrices)


def naive_squared_distance(mu_a, mu_b):
    mu_a = np.asarray(mu_a, dtype=float)
    mu_b = np.asarray(mu_b, dtype=float)
    if mu_a.shape[-1:] != mu_b.shape[-1:]:
        raise ValueError(f"dimension mismatch: {mu_a.shape} vs {mu_b.shape}")
    diff = mu_a - mu_b
    return np.sum(diff * diff, axis=-1)


def unbiased_squared_distance(naive_sq, trace_a, trace_b, k_a, k_b):
    """Remove the expected excess Tr(S_a)/k_a + Tr(S_b)/k_b from a squared
    distance between empirical means. The result may be negative;
    broadcasts over arrays."""
    return naive_sq - np.asarray(trace_a) / k_a - np.asarray(trace_b) / k_b


@dataclass(frozen=True)
class DistanceMatrix:
    squared: np.ndarray
    labels: tuple
    corrected: bool
    floor_applied: bool

    @property
    def n(self) -> int:
        return self.squared.shape[0]


def distance_floor(naive_sq: np.ndarray) -> float:
    return max(1e-12, 1e-9 * float(np.max(naive_sq, initial=0.0)))


def class_traces(support_by_class: Mapping[Label, np.ndarray], variant) -> dict:
    """Covariance traces per class in the space the samples live in."""
    model = fit_covariance(support_by_class, variant)
    return {c: model.trace(c) for c in model.labels}


def corrected_distance_matrix(task: FewShotTask, variant=None, correct: bool = True) -> DistanceMatrix:
    """Pairwise squared distances between class means in the original
    feature space, bias-corrected unless ``correct`` is False. Entries
    under the floor max(1e-12, 1e-9 * max naive entry) are clamped."""
    blocks = task.support_by_class
    labels = task.classes
    variant = select_covariance_model(task.n_ways, task.k_shots, variant)
    means = fit_class_means(blocks)
    M = np.stack([means[c] for c in labels])
    diff = M[:, None, :] - M[None, :, :]
    naive = np.einsum("ijk,ijk->ij", diff, diff)

    squared = naive.copy()
    if correct:
        traces = class_traces(blocks, variant)
        tr = np.array([traces[c] for c in labels])
        ks = np.array([blocks[c].shape[0] for c in labels], dtype=float)
        squared = unbiased_squared_distance(naive, tr[:, None], tr[None, :], ks[:, None], ks[None, :])

    eps = distance_floor(naive)
    off = ~np.eye(len(labels), dtype=bool)
    low = off & (squared < eps)
    squared[low] = eps
    np.fill_diagonal(squared, 0.0)
    squared = 0.5 * (squared + squared.T)
    return DistanceMatrix(squared, labels, corrected=correct, floor_applied=bool(low.any()))
