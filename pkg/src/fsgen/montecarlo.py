"""Monte-Carlo estimation of the error of a nearest-class-mean classifier
under a fitted Gaussian model, the end-to-end prediction pipeline, and a
quadrature oracle for low-dimensional checks."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy import integrate, special

from .analytic import binary_predict
from .core import ErrorEstimate, FewShotTask, fit_class_means, ncm_predict, project_to_class_subspace
from .estimators import (CovarianceModel, CovarianceVariant, corrected_distance_matrix,
                         fit_covariance, select_covariance_model)
from .mds import CenterConfiguration, embed_centers

CHUNK = 1 << 16


@dataclass(frozen=True)
class MonteCarloConfig:
    samples_per_class: int = 10_000
    seed: int = 0
    parallel_streams: int = 1

    def __post_init__(self):
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")


def _sqrt_psd(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    top = max(float(vals.max(initial=0.0)), 0.0)
    if vals.min(initial=0.0) < -1e-10 * max(top, 1.0):
        raise ValueError("covariance is not positive semidefinite")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _count_errors(centers, c, factor, scale, n_draw, seed, chunk):
    rng = np.random.default_rng(np.random.SeedSequence([seed, c, chunk]))
    Z = rng.standard_normal((n_draw, centers.shape[1]))
    X = centers[c] + (Z @ factor.T if factor is not None else scale * Z)
    return int(np.count_nonzero(ncm_predict(X, centers) != c))


def estimate_error_monte_carlo(centers, cov: CovarianceModel,
                               cfg: MonteCarloConfig = MonteCarloConfig()) -> ErrorEstimate:
    """Fraction of virtual samples from N(center_c, Sigma_c) that the NCM
    rule assigns to another class, averaged with uniform class priors.

    Draws are split into fixed-size chunks whose generators are seeded from
    (seed, class index, chunk index), so the estimate does not depend on
    ``parallel_streams``.
    """
    pts = np.asarray(getattr(centers, "points", centers), dtype=float)
    n, dim = pts.shape
    labels = cov.labels
    if len(labels) != n:
        raise ValueError(f"{n} centers but covariance for {len(labels)} classes")
    if cov.dim != dim:
        raise ValueError(f"covariance dimension {cov.dim} != center dimension {dim}")

    jobs = []
    m = cfg.samples_per_class
    for c, lab in enumerate(labels):
        if cov.is_isotropic:
            var = cov.variances[lab]
            if var < 0:
                raise ValueError("covariance is not positive semidefinite")
            factor, scale = None, np.sqrt(var)
        else:
            factor, scale = _sqrt_psd(cov.matrix(lab)), None
        for j, start in enumerate(range(0, m, CHUNK)):
            jobs.append((pts, c, factor, scale, min(CHUNK, m - start), cfg.seed, j))

    if cfg.parallel_streams > 1:
        with ThreadPoolExecutor(cfg.parallel_streams) as pool:
            counts = list(pool.map(lambda a: _count_errors(*a), jobs))
    else:
        counts = [_count_errors(*a) for a in jobs]
    p = sum(counts) / (n * m)
    return ErrorEstimate(p, "monte_carlo", m_used=m, seed=cfg.seed,
                         variant=cov.variant.value)


def _cell_constraints(centers: np.ndarray, c: int):
    """Half-space constraints a.z <= b describing where class c wins."""
    mu = centers[c]
    rows = []
    empty = False
    for j, other in enumerate(centers):
        if j == c:
            continue
        a = other - mu
        b = 0.5 * (other @ other - mu @ mu)
        if not np.any(a):
            # identical centers: the lower index takes every tie
            empty = empty or j < c
            continue
        rows.append((a, b))
    return rows, empty


def _interval(rows, x=None):
    lo, hi = -np.inf, np.inf
    for a, b in rows:
        if x is None:
            coef, rhs = a[0], b
        else:
            coef, rhs = a[1], b - a[0] * x
            if abs(coef) <= 1e-14 * np.abs(a).max():
                if a[0] * x > b:
                    return 1.0, 0.0
                continue
        if coef > 0:
            hi = min(hi, rhs / coef)
        else:
            lo = max(lo, rhs / coef)
    return lo, hi


def quadrature_class_errors(centers, sigma: float, tol: float = 1e-10) -> np.ndarray:
    """Per-class misclassification probabilities for isotropic Gaussians in
    one or two dimensions, by adaptive integration of the exact inner
    Gaussian mass of each decision cell."""
    pts = np.atleast_2d(np.asarray(getattr(centers, "points", centers), dtype=float))
    n, dim = pts.shape
    if dim > 2:
        raise ValueError("oracle limited to 2-D")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    errors = np.empty(n)
    for c in range(n):
        rows, empty = _cell_constraints(pts, c)
        if empty:
            errors[c] = 1.0
            continue
        mu = pts[c]
        if dim == 1:
            lo, hi = _interval(rows)
            inside = special.ndtr((hi - mu[0]) / sigma) - special.ndtr((lo - mu[0]) / sigma) if hi > lo else 0.0
            errors[c] = 1.0 - inside
            continue

        def inner(x):
            lo, hi = _interval(rows, x)
            if hi <= lo:
                return 0.0
            mass = special.ndtr((hi - mu[1]) / sigma) - special.ndtr((lo - mu[1]) / sigma)
            return np.exp(-0.5 * ((x - mu[0]) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi)) * mass

        a_lo, a_hi = mu[0] - 12 * sigma, mu[0] + 12 * sigma
        breaks = []
        for i, (a1, b1) in enumerate(rows):
            if abs(a1[1]) <= 1e-14 * np.abs(a1).max():
                breaks.append(b1 / a1[0])
            for a2, b2 in rows[i + 1:]:
                det = a1[0] * a2[1] - a1[1] * a2[0]
                if det != 0:
                    breaks.append((b1 * a2[1] - b2 * a1[1]) / det)
        breaks = sorted(x for x in breaks if a_lo < x < a_hi)
        edges = [a_lo, *breaks, a_hi]
        inside = sum(integrate.quad(inner, l, r, epsabs=tol, epsrel=tol, limit=200)[0]
                     for l, r in zip(edges[:-1], edges[1:]) if r > l)
        errors[c] = 1.0 - inside
    return errors


def quadrature_oracle_error(centers, sigma: float) -> float:
    """Probability of error under uniform priors, integrated numerically."""
    return float(np.mean(quadrature_class_errors(centers, sigma)))


def _align_covariance(cov: CovarianceModel, proj_means: np.ndarray,
                      config: CenterConfiguration) -> CovarianceModel:
    """Express a covariance fitted in the QR frame in the frame of the MDS
    configuration (orthogonal Procrustes on the centered class means)."""
    dim = config.dim
    if cov.is_isotropic:
        return CovarianceModel(cov.variant, dim, dict(cov.variances))
    r = cov.dim
    Y = proj_means - proj_means.mean(axis=0)
    Y = np.pad(Y, ((0, 0), (0, dim - r)))
    X = config.points - config.points.mean(axis=0)
    R, _ = scipy.linalg.orthogonal_procrustes(X, Y)
    mats = {}
    for lab in cov.labels:
        S = np.zeros((dim, dim))
        S[:r, :r] = cov.matrices[lab]
        if dim > r:
            S[r:, r:] = np.eye(dim - r) * np.trace(cov.matrices[lab]) / r
        mats[lab] = R @ S @ R.T
    return CovarianceModel(cov.variant, dim, dict(cov.variances), mats)


def predict_accuracy(task: FewShotTask, variant="auto", correct: bool = True,
                     mc: Optional[MonteCarloConfig] = None, alpha: float = 0.05,
                     metric_mds: bool = True) -> ErrorEstimate:
    """Predict the error of the NCM classifier built on ``task.support``.

    Two classes with the shared isotropic model use the closed form; every
    other case embeds the (corrected) distances, refits the covariance in
    the class subspace and samples a virtual validation set.
    """
    mc = mc or MonteCarloConfig()
    n, k = task.n_ways, task.k_shots
    chosen = select_covariance_model(n, k, variant)
    if n == 2 and chosen is CovarianceVariant.SHARED_ISOTROPIC:
        return binary_predict(task, alpha=alpha, correct=correct)

    dist = corrected_distance_matrix(task, chosen, correct=correct)
    means = fit_class_means(task)
    stacked = np.stack([means[c] for c in task.classes])
    if np.all(stacked == stacked[0]):
        # every class collapses onto one point: the tie-break picks class 0
        return ErrorEstimate((n - 1) / n, "monte_carlo", m_used=0, seed=mc.seed,
                             variant=chosen.value, corrected=correct)

    config = embed_centers(dist, metric=metric_mds)
    proj = project_to_class_subspace(task, means)
    cov = fit_covariance(proj.support_proj.by_class(), chosen)
    proj_means = np.stack([proj.means_proj[c] for c in task.classes])
    cov = _align_covariance(cov, proj_means, config)
    est = estimate_error_monte_carlo(config, cov, mc)
    return ErrorEstimate(est.p_error, "monte_carlo", m_used=est.m_used, seed=mc.seed,
                         variant=chosen.value, corrected=correct)
