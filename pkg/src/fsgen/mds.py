"""Center placement from a squared-distance matrix: classical scaling
followed by SMACOF stress majorization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import isotonic_regression


@dataclass(frozen=True)
class CenterConfiguration:
    points: np.ndarray  # (n, n-1)
    stress: float  # normalized: sqrt(sum (d - delta)^2 / sum delta^2)
    iterations: int
    labels: tuple = ()

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _check_squared(D2) -> np.ndarray:
    D2 = np.asarray(getattr(D2, "squared", D2), dtype=float)
    if D2.ndim != 2 or D2.shape[0] != D2.shape[1]:
        raise ValueError("distance matrix must be square")
    scale = max(1.0, float(np.max(np.abs(D2), initial=0.0)))
    if not np.allclose(D2, D2.T, rtol=0, atol=1e-10 * scale):
        raise ValueError("distance matrix is not symmetric")
    if np.any(D2 < 0):
        raise ValueError("distance matrix has negative entries")
    if np.any(np.diag(D2) != 0):
        raise ValueError("distance matrix diagonal must be zero")
    return 0.5 * (D2 + D2.T)


def classical_scaling(D2: np.ndarray, dim: int) -> np.ndarray:
    """Torgerson scaling with negative eigenvalues set to zero."""
    n = D2.shape[0]
    J = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * J @ D2 @ J
    vals, vecs = np.linalg.eigh(0.5 * (B + B.T))
    order = np.argsort(vals)[::-1][:dim]
    vals = np.clip(vals[order], 0.0, None)
    X = vecs[:, order] * np.sqrt(vals)
    if X.shape[1] < dim:
        X = np.pad(X, ((0, 0), (0, dim - X.shape[1])))
    return X


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def normalized_stress(X: np.ndarray, delta: np.ndarray) -> float:
    denom = np.sum(delta ** 2)
    if denom == 0:
        return float(np.sqrt(np.sum(pairwise_distances(X) ** 2)))
    return float(np.sqrt(np.sum((pairwise_distances(X) - delta) ** 2) / denom))


def _guttman(X: np.ndarray, target: np.ndarray) -> np.ndarray:
    n = X.shape[0]
    d = pairwise_distances(X)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d > 0, target / d, 0.0)
    B = -ratio
    np.fill_diagonal(B, 0.0)
    np.fill_diagonal(B, -B.sum(axis=1))
    return B @ X / n


def _disparities(X: np.ndarray, delta: np.ndarray) -> np.ndarray:
    # monotone regression of current distances on the target ordering,
    # rescaled to the target's sum of squares
    n = X.shape[0]
    iu = np.triu_indices(n, 1)
    d = pairwise_distances(X)[iu]
    order = np.lexsort((d, delta[iu]))
    fitted = np.empty_like(d)
    fitted[order] = isotonic_regression(d[order]).x
    norm = np.sum(fitted ** 2)
    if norm > 0:
        fitted *= np.sqrt(np.sum(delta[iu] ** 2) / norm)
    out = np.zeros_like(delta)
    out[iu] = fitted
    return out + out.T


def embed_centers(D2, metric: bool = True, max_iter: int = 1000, tol: float = 1e-9) -> CenterConfiguration:
    """Place n points in n-1 dimensions whose distances match sqrt(D2).

    ``metric=False`` fits the ordering of the targets only (isotonic
    disparities) and rescales the result to the target distances by least
    squares at the end.
    """
    labels = tuple(getattr(D2, "labels", ()))
    D2 = _check_squared(D2)
    n = D2.shape[0]
    dim = max(n - 1, 1)
    delta = np.sqrt(D2)
    X = classical_scaling(D2, dim)
    total = np.sum(delta ** 2)
    if total == 0:
        return CenterConfiguration(np.zeros((n, dim)), 0.0, 0, labels)

    target = delta if metric else _disparities(X, delta)
    raw = np.sum((pairwise_distances(X) - target) ** 2)
    it = 0
    while it < max_iter and raw > 1e-30 * total:
        X = _guttman(X, target)
        it += 1
        if not metric:
            target = _disparities(X, delta)
        new = np.sum((pairwise_distances(X) - target) ** 2)
        if raw - new < tol * raw:
            raw = new
            break
        raw = new

    if not metric:
        d = pairwise_distances(X)
        dd = np.sum(d * d)
        if dd > 0:
            X = X * (np.sum(d * delta) / dd)
    X = X - X.mean(axis=0)
    return CenterConfiguration(X, normalized_stress(X, delta), it, labels)
