"""Evaluation metrics and the covariance-model comparison experiment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import canonical_labels, class_subspace_basis
from .estimators import CovarianceVariant, fit_covariance


def mape(p_hat, p_true):
    """|P_e - P_e_hat| / (1 - P_e); broadcasts."""
    p_hat = np.asarray(p_hat, dtype=float)
    p_true = np.asarray(p_true, dtype=float)
    if np.any(p_true >= 1.0):
        raise ValueError("undefined MAPE at zero accuracy")
    out = np.abs(p_true - p_hat) / (1.0 - p_true)
    return float(out) if out.ndim == 0 else out


def mean_and_se(values) -> tuple:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")
    return float(v.mean()), se


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc_curve(scores, truths, threshold: float = 0.85) -> RocCurve:
    """ROC of predicted accuracies against tasks binarized as easy
    (true accuracy >= threshold). One vertex per distinct score, area by
    the trapezoid rule."""
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(truths, dtype=float) >= threshold
    P = int(positive.sum())
    N = positive.size - P
    if P == 0 or N == 0:
        raise ValueError("degenerate ROC: truths fall in a single class")
    order = np.argsort(-scores, kind="mergesort")
    s, pos = scores[order], positive[order]
    tp = np.cumsum(pos)
    fp = np.cumsum(~pos)
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tpr = np.r_[0.0, tp[last] / P]
    fpr = np.r_[0.0, fp[last] / N]
    thresholds = np.r_[np.inf, s[last]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, thresholds, auc)


def gaussian_kl(mu1, cov1, mu2, cov2) -> float:
    """KL(N(mu1, cov1) || N(mu2, cov2))."""
    mu1, mu2 = np.atleast_1d(mu1).astype(float), np.atleast_1d(mu2).astype(float)
    cov1, cov2 = np.atleast_2d(cov1).astype(float), np.atleast_2d(cov2).astype(float)
    d = mu1.size
    sign2, logdet2 = np.linalg.slogdet(cov2)
    if sign2 <= 0 or not np.isfinite(logdet2):
        raise ValueError("second covariance is singular")
    sign1, logdet1 = np.linalg.slogdet(cov1)
    if sign1 <= 0:
        return float("inf")
    diff = mu2 - mu1
    try:
        sol = np.linalg.solve(cov2, np.column_stack([cov1, diff]))
    except np.linalg.LinAlgError:
        raise ValueError("second covariance is singular") from None
    val = 0.5 * (np.trace(sol[:, :d]) + diff @ sol[:, d] - d + logdet2 - logdet1)
    return float(max(val, 0.0))


def model_selection_experiment(reference_tasks: Sequence[Mapping], k_grid: Iterable[int],
                               seed: int = 0, min_pool: int = 100,
                               variants=tuple(CovarianceVariant)) -> list:
    """Mean KL(fitted || reference) per covariance variant and shot count.

    Each reference task maps labels to large sample pools. Everything is
    measured in the subspace spanned by the pool means; the reference is
    the full-covariance fit on the whole pool.
    """
    k_grid = list(k_grid)
    rows = {(k, v): [] for k in k_grid for v in variants}
    for t, pools in enumerate(reference_tasks):
        labels = canonical_labels(pools)
        pools = {c: np.asarray(pools[c], dtype=float) for c in labels}
        for c, p in pools.items():
            if p.shape[0] < min_pool:
                raise ValueError(f"pool for class {c!r} has {p.shape[0]} < {min_pool} samples")
        basis = class_subspace_basis({c: p.mean(axis=0) for c, p in pools.items()})
        proj = {c: p @ basis.T for c, p in pools.items()}
        ref = fit_covariance(proj, CovarianceVariant.FULL_PER_CLASS)
        ref_means = {c: p.mean(axis=0) for c, p in proj.items()}
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        for k in k_grid:
            sub = {}
            for c, p in proj.items():
                if k > p.shape[0]:
                    raise ValueError(f"k={k} exceeds pool size for class {c!r}")
                sub[c] = p[np.sort(rng.choice(p.shape[0], size=k, replace=False))]
            for v in variants:
                if v.estimates_variance and k < 2:
                    continue
                fit = fit_covariance(sub, v)
                kls = [gaussian_kl(sub[c].mean(axis=0), fit.matrix(c), ref_means[c], ref.matrix(c))
                       for c in labels]
                rows[(k, v)].append(float(np.mean(kls)))
    table = []
    for (k, v), vals in rows.items():
        if not vals:
            continue
        mean, se = mean_and_se(vals)
        table.append({"k": k, "model": v.value, "mean_kl": mean, "se": se, "tasks": len(vals)})
    return table
