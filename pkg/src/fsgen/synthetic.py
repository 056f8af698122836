"""Gaussian task generators and the synthetic experiment drivers."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import special, stats

from .analytic import binary_error_probability, lemma1_bound
from .baselines import loo_cross_validation
from .core import FewShotTask, class_subspace_basis, ncm_predict
from .estimators import (CovarianceModel, CovarianceVariant, naive_squared_distance,
                         unbiased_squared_distance)
from .metrics import mape, mean_and_se
from .montecarlo import MonteCarloConfig, estimate_error_monte_carlo, predict_accuracy


@dataclass(frozen=True)
class SyntheticSpec:
    n_ways: int = 2
    k_shots: int = 10
    dim: int = 64
    snr_db: float = 0.0
    sigma: float = 1.0
    seed: int = 0
    n_query: int = 50

    @property
    def r(self) -> float:
        """Center separation implied by snr_db = 10 log10(r / (sqrt(2) sigma))."""
        return snr_to_distance(self.snr_db, self.sigma)


def snr_to_distance(snr_db, sigma=1.0):
    return math.sqrt(2.0) * sigma * 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)


def simplex_centers(n: int, edge: float, dim: Optional[int] = None) -> np.ndarray:
    """Vertices of a regular simplex with the given edge length, centered at
    the origin and zero-padded to ``dim`` coordinates."""
    dim = n - 1 if dim is None else dim
    if dim < n - 1:
        raise ValueError(f"a {n}-point simplex needs at least {n - 1} dimensions")
    E = np.eye(n) - 1.0 / n
    # orthonormal coordinates for the centered hyperplane
    U, _, _ = np.linalg.svd(E)
    pts = E @ U[:, : n - 1] * (edge / math.sqrt(2.0))
    return np.pad(pts, ((0, 0), (0, dim - (n - 1))))


@dataclass(frozen=True)
class SyntheticTask:
    task: FewShotTask
    centers: np.ndarray
    sigma: float
    r: float
    true_p_error: Optional[float]


def generate_isotropic_task(spec: SyntheticSpec) -> SyntheticTask:
    """Sample support (and query) sets from N(center_c, sigma^2 I) with the
    centers on a regular simplex of edge r."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    centers = simplex_centers(spec.n_ways, spec.r, spec.dim)
    shape = (spec.n_ways, spec.k_shots + spec.n_query, spec.dim)
    samples = centers[:, None, :] + spec.sigma * rng.standard_normal(shape)
    support = {c: samples[c, : spec.k_shots] for c in range(spec.n_ways)}
    query = ({c: samples[c, spec.k_shots:] for c in range(spec.n_ways)}
             if spec.n_query > 0 else None)
    p_true = binary_error_probability(spec.r, spec.sigma) if spec.n_ways == 2 else None
    return SyntheticTask(FewShotTask.from_blocks(support, query), centers, spec.sigma, spec.r, p_true)


def classifier_true_error(centers: np.ndarray, sigma: float, est_means: np.ndarray,
                          m: int = 20_000, seed: int = 0) -> float:
    """Generalization error of the NCM rule with ``est_means`` when the data
    really follow N(centers_c, sigma^2 I) with uniform priors.

    Exact for two classes. Otherwise sampled in the span of the estimated
    means, where isotropic noise orthogonal to that span cannot change a
    decision.
    """
    centers = np.asarray(centers, dtype=float)
    est = np.asarray(est_means, dtype=float)
    n = centers.shape[0]
    if n == 2:
        w = est[1] - est[0]
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.5
        mid = 0.5 * (est[0] + est[1])
        s0 = -(centers[0] - mid) @ w / norm
        s1 = (centers[1] - mid) @ w / norm
        return float(1.0 - 0.5 * (special.ndtr(s0 / sigma) + special.ndtr(s1 / sigma)))
    basis = class_subspace_basis({c: est[c] for c in range(n)})
    est_p = est @ basis.T
    true_p = centers @ basis.T
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE7]))
    wrong = 0
    for c in range(n):
        X = true_p[c] + sigma * rng.standard_normal((m, basis.shape[0]))
        wrong += int(np.count_nonzero(ncm_predict(X, est_p) != c))
    return wrong / (n * m)


def oracle_error(centers: np.ndarray, sigma: float, mc: Optional[MonteCarloConfig] = None) -> float:
    """The prediction pipeline evaluated with the generating parameters."""
    n = centers.shape[0]
    if n == 2:
        return binary_error_probability(np.linalg.norm(centers[1] - centers[0]), sigma)
    basis = class_subspace_basis({c: centers[c] for c in range(n)})
    pts = centers @ basis.T
    cov = CovarianceModel(CovarianceVariant.SHARED_ISOTROPIC, pts.shape[1],
                          {c: sigma ** 2 for c in range(n)})
    return estimate_error_monte_carlo(pts, cov, mc or MonteCarloConfig()).p_error


def anisotropic_reference_tasks(n_ways: int, dim: int, count: int, pool: int = 1000,
                                spread: float = 3.0, seed: int = 0) -> list:
    """Reference tasks whose classes have random anisotropic covariances.

    Each class gets its own random rotation and log-uniform axis scales in
    [1/spread, spread]; means are standard normal. Returns one
    {label: (pool, dim) samples} mapping per task.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA5]))
    out = []
    for _ in range(count):
        task = {}
        for c in range(n_ways):
            Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
            scales = np.exp(rng.uniform(-np.log(spread), np.log(spread), dim))
            mean = rng.standard_normal(dim)
            task[c] = mean + (rng.standard_normal((pool, dim)) * scales) @ Q.T
        out.append(task)
    return out


# --- distance-estimator experiments ---------------------------------------

def _distance_trials(rng, trials, k, d, r_values, sigma, chunk):
    """Naive and unbiased squared-distance estimates for isotropic pairs.

    The same noise draws are reused for every separation in ``r_values``
    (paired design). Returns arrays of shape (len(r_values), trials).
    """
    r_values = np.atleast_1d(r_values)
    naive = np.empty((r_values.size, trials))
    unbiased = np.empty_like(naive)
    for start in range(0, trials, chunk):
        t = min(chunk, trials - start)
        noise = sigma * rng.standard_normal((t, 2, k, d))
        mean_noise = noise.mean(axis=2)
        dev = noise - mean_noise[:, :, None, :]
        per_class = np.einsum("tckd,tckd->tc", dev, dev) / ((k - 1) * d)
        shared = per_class.mean(axis=1)
        trace = d * shared
        for i, r in enumerate(r_values):
            mu_a = mean_noise[:, 0].copy()
            mu_a[:, 0] += r
            nv = naive_squared_distance(mu_a, mean_noise[:, 1])
            naive[i, start:start + t] = nv
            unbiased[i, start:start + t] = unbiased_squared_distance(nv, trace, trace, k, k)
    return naive, unbiased


def run_bias_experiment(d: int, k_grid: Sequence[int], snr_grid: Sequence[float],
                        trials: int = 10_000, sigma: float = 1.0, seed: int = 0,
                        chunk: int = 500) -> list:
    """Bias of both squared-distance estimators normalized by r^2, with
    standard errors, for every (k, snr) cell."""
    if trials < 2:
        raise ValueError("need at least two trials")
    r = snr_to_distance(np.asarray(snr_grid, dtype=float), sigma)
    rows = []
    for ki, k in enumerate(k_grid):
        rng = np.random.default_rng(np.random.SeedSequence([seed, d, k]))
        naive, unbiased = _distance_trials(rng, trials, k, d, r, sigma, chunk)
        for i, snr in enumerate(snr_grid):
            r2 = r[i] ** 2
            nb, nse = mean_and_se(naive[i] / r2 - 1.0)
            ub, use = mean_and_se(unbiased[i] / r2 - 1.0)
            rows.append({
                "d": d, "k": k, "snr_db": float(snr), "r2": float(r2),
                "naive_bias": nb, "naive_se": nse,
                "unbiased_bias": ub, "unbiased_se": use,
                "expected_naive_bias": 2 * d * sigma ** 2 / (k * r2),
                "trials": trials,
            })
    return rows


def _variance_se(x: np.ndarray) -> float:
    n = x.size
    c = x - x.mean()
    m2 = np.mean(c ** 2)
    m4 = np.mean(c ** 4)
    return float(math.sqrt(max(m4 - m2 ** 2, 0.0) / n))


def run_variance_experiment(d: int, k: int, snr_grid: Sequence[float], trials: int = 10_000,
                            sigma: float = 1.0, seed: int = 0, chunk: int = 500) -> list:
    """Variance of r_hat^2 / r^2 for both estimators on paired trials."""
    r = snr_to_distance(np.asarray(snr_grid, dtype=float), sigma)
    rng = np.random.default_rng(np.random.SeedSequence([seed, d, k, 1]))
    naive, unbiased = _distance_trials(rng, trials, k, d, r, sigma, chunk)
    rows = []
    for i, snr in enumerate(snr_grid):
        a = naive[i] / r[i] ** 2
        b = unbiased[i] / r[i] ** 2
        rows.append({
            "d": d, "k": k, "snr_db": float(snr),
            "naive_var": float(a.var(ddof=1)), "naive_var_se": _variance_se(a),
            "unbiased_var": float(b.var(ddof=1)), "unbiased_var_se": _variance_se(b),
            "trials": trials,
        })
    return rows


# --- confidence-bound experiment ------------------------------------------

def run_lemma1_experiment(k_grid: Sequence[int], alphas: Sequence[float] = (0.05,),
                          trials: int = 10_000, snr_db: float = 0.0, sigma: float = 1.0,
                          seed: int = 0) -> dict:
    """Coverage of the known-sigma half-width on univariate two-class
    problems, and a linear fit of 1 / mean|P_e - P_e_hat|^2 against k.

    Coverage rows carry the one-sided binomial p-value of the hypothesis
    that true coverage is at least 1 - alpha.
    """
    r = float(snr_to_distance(snr_db, sigma))
    p_true = binary_error_probability(r, sigma)
    rows = []
    for k in k_grid:
        rng = np.random.default_rng(np.random.SeedSequence([seed, k, 2]))
        a = rng.normal(r, sigma, size=(trials, k)).mean(axis=1)
        b = rng.normal(0.0, sigma, size=(trials, k)).mean(axis=1)
        p_hat = binary_error_probability(np.abs(a - b), sigma)
        gap = np.abs(p_true - p_hat)
        row = {"k": k, "trials": trials, "mean_abs_gap": float(gap.mean()),
               "inv_sq_gap": float(1.0 / gap.mean() ** 2)}
        for alpha in alphas:
            eps = lemma1_bound(k, alpha)
            hits = int(np.count_nonzero(gap <= eps))
            test = stats.binomtest(hits, trials, 1.0 - alpha, alternative="less")
            row[f"bound_{alpha:g}"] = eps
            row[f"coverage_{alpha:g}"] = hits / trials
            row[f"pvalue_{alpha:g}"] = float(test.pvalue)
        rows.append(row)
    ks = np.array([row["k"] for row in rows], dtype=float)
    ys = np.array([row["inv_sq_gap"] for row in rows])
    fit = stats.linregress(ks, ys) if ks.size >= 2 else None
    return {
        "rows": rows,
        "snr_db": snr_db,
        "p_true": p_true,
        "slope": float(fit.slope) if fit else float("nan"),
        "intercept": float(fit.intercept) if fit else float("nan"),
        "r_squared": float(fit.rvalue ** 2) if fit else float("nan"),
    }


# --- prediction sweeps ----------------------------------------------------

PREDICTORS = ("ours-unbiased", "ours-biased", "cv", "oracle")


def evaluate_synthetic_task(spec: SyntheticSpec, predictors: Sequence[str] = PREDICTORS,
                            mc_samples: int = 10_000, truth_samples: int = 20_000) -> dict:
    """Predicted and true error of one synthetic task; predictions are
    clipped to [0, 1 - 1/n]."""
    st = generate_isotropic_task(replace(spec, n_query=0))
    task = st.task
    n = task.n_ways
    mc = MonteCarloConfig(mc_samples, seed=spec.seed)
    est_means = np.stack([b.mean(axis=0) for b in task.support_by_class.values()])
    out = {"seed": spec.seed, "snr_db": spec.snr_db, "k": spec.k_shots, "n": n,
           "true": classifier_true_error(st.centers, st.sigma, est_means, truth_samples, spec.seed)}
    for name in predictors:
        if name == "ours-unbiased":
            p = predict_accuracy(task, correct=True, mc=mc).p_error
        elif name == "ours-biased":
            p = predict_accuracy(task, correct=False, mc=mc).p_error
        elif name == "cv":
            p = loo_cross_validation(task).p_error
        elif name == "oracle":
            p = oracle_error(st.centers, st.sigma, mc)
        else:
            raise ValueError(f"unknown predictor {name!r}")
        out[name] = float(np.clip(p, 0.0, 1.0 - 1.0 / n))
    return out


def _evaluate_args(args):
    return evaluate_synthetic_task(*args)


def run_task_batch(specs: Sequence[SyntheticSpec], predictors=PREDICTORS, mc_samples=10_000,
                   workers: int = 1) -> list:
    args = [(s, tuple(predictors), mc_samples) for s in specs]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_evaluate_args, args, chunksize=max(1, len(args) // (8 * workers))))
    return [_evaluate_args(a) for a in args]


def summarize_mape(records: Sequence[dict], predictors: Sequence[str]) -> dict:
    """Mean MAPE and its standard error per predictor, plus paired
    differences against ours-unbiased."""
    truth = np.array([r["true"] for r in records])
    per = {p: mape(np.array([r[p] for r in records]), truth) for p in predictors}
    out = {}
    for p, vals in per.items():
        m, se = mean_and_se(vals)
        out[p] = {"mape": m, "se": se}
    if "ours-unbiased" in per:
        for p, vals in per.items():
            if p != "ours-unbiased":
                m, se = mean_and_se(vals - per["ours-unbiased"])
                out[p]["diff_vs_unbiased"] = m
                out[p]["diff_se"] = se
    return out


def run_snr_sweep(snr_grid: Iterable[float], n_tasks: int = 1000, n_ways: int = 2, k_shots: int = 10,
                  dim: int = 4, predictors: Sequence[str] = PREDICTORS, seed: int = 0,
                  mc_samples: int = 10_000, workers: int = 1) -> list:
    """MAPE per predictor for each SNR, each cell averaged over n_tasks
    independent tasks."""
    rows = []
    for i, snr in enumerate(snr_grid):
        specs = [SyntheticSpec(n_ways, k_shots, dim, float(snr), 1.0,
                               seed=_task_seed(seed, i, t), n_query=0)
                 for t in range(n_tasks)]
        records = run_task_batch(specs, predictors, mc_samples, workers)
        rows.append({"snr_db": float(snr), "tasks": n_tasks,
                     "summary": summarize_mape(records, predictors)})
    return rows


def _task_seed(seed: int, cell: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, cell, trial]).generate_state(1, np.uint64)[0])
