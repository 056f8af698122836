import numpy as np
import pytest
from scipy import stats

from fsgen.analytic import binary_error_probability, binary_predict
from fsgen.estimators import CovarianceModel, CovarianceVariant
from fsgen.montecarlo import (MonteCarloConfig, estimate_error_monte_carlo, predict_accuracy,
                              quadrature_class_errors, quadrature_oracle_error)
from fsgen.synthetic import SyntheticSpec, generate_isotropic_task, simplex_centers
from conftest import random_task

V = CovarianceVariant


def iso(n, dim, var):
    return CovarianceModel(V.SHARED_ISOTROPIC, dim, {c: var for c in range(n)})


def grid_oracle(centers, sigma, points=801):
    """Riemann sum of each class density over the rest of the plane."""
    lo = centers.min(0) - 8 * sigma
    hi = centers.max(0) + 8 * sigma
    xs = np.linspace(lo[0], hi[0], points)
    ys = np.linspace(lo[1], hi[1], points)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Z = np.stack([X.ravel(), Y.ravel()], 1)
    d = ((Z[:, None, :] - centers[None]) ** 2).sum(-1)
    win = d.argmin(1)
    cell = (xs[1] - xs[0]) * (ys[1] - ys[0])
    out = []
    for c, mu in enumerate(centers):
        pdf = stats.multivariate_normal(mu, sigma ** 2 * np.eye(2)).pdf(Z)
        out.append(np.sum(pdf * (win != c)) * cell)
    return np.mean(out)


def test_tiny_sigma_gives_zero_error():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert estimate_error_monte_carlo(pts, iso(3, 2, 1e-8), MonteCarloConfig(5000)).p_error == 0.0


def test_identical_centers_give_chance_level():
    n, m = 4, 50_000
    est = estimate_error_monte_carlo(np.zeros((n, 3)), iso(n, 3, 1.0), MonteCarloConfig(m))
    p = (n - 1) / n
    assert abs(est.p_error - p) <= 3 * np.sqrt(p * (1 - p) / (n * m))


@pytest.mark.parametrize("r", [0.5, 1.5, 3.0])
def test_binary_matches_closed_form(r):
    m = 100_000
    pts = np.array([[0.0], [r]])
    est = estimate_error_monte_carlo(pts, iso(2, 1, 1.0), MonteCarloConfig(m, seed=4)).p_error
    p = binary_error_probability(r, 1.0)
    assert abs(est - p) <= 3 * np.sqrt(p * (1 - p) / (2 * m))


def test_independent_of_parallel_streams():
    pts = simplex_centers(4, 1.5, 3)
    a = estimate_error_monte_carlo(pts, iso(4, 3, 1.0), MonteCarloConfig(200_000, 7, 1))
    b = estimate_error_monte_carlo(pts, iso(4, 3, 1.0), MonteCarloConfig(200_000, 7, 4))
    assert a.p_error == b.p_error


def test_seed_changes_estimate():
    pts = simplex_centers(3, 1.0, 2)
    a = estimate_error_monte_carlo(pts, iso(3, 2, 1.0), MonteCarloConfig(10_000, 1))
    b = estimate_error_monte_carlo(pts, iso(3, 2, 1.0), MonteCarloConfig(10_000, 2))
    assert a.p_error != b.p_error


def test_rejects_non_psd():
    cov = CovarianceModel(V.FULL_PER_CLASS, 2, {0: 1.0, 1: 1.0},
                          {0: np.diag([1.0, -1.0]), 1: np.eye(2)})
    with pytest.raises(ValueError, match="positive semidefinite"):
        estimate_error_monte_carlo(np.array([[0.0, 0.0], [1.0, 0.0]]), cov)


def test_invariant_under_rigid_motion(rng):
    pts = rng.standard_normal((4, 3))
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    moved = pts @ Q.T + rng.standard_normal(3)
    m = 200_000
    a = estimate_error_monte_carlo(pts, iso(4, 3, 1.0), MonteCarloConfig(m, 3)).p_error
    b = estimate_error_monte_carlo(moved, iso(4, 3, 1.0), MonteCarloConfig(m, 9)).p_error
    assert abs(a - b) <= 4 * np.sqrt(2 * 0.25 / (4 * m))


@pytest.mark.parametrize("r", [0.3, 1.0, 2.0, 5.0])
def test_quadrature_binary_closed_form(r):
    assert quadrature_oracle_error(np.array([[0.0], [r]]), 1.0) == pytest.approx(
        binary_error_probability(r, 1.0), abs=1e-9)
    pts2 = np.array([[0.2, -0.1], [0.2 + r * 0.6, -0.1 + r * 0.8]])
    assert quadrature_oracle_error(pts2, 1.0) == pytest.approx(
        binary_error_probability(r, 1.0), abs=1e-6)


def test_quadrature_triangle_symmetry():
    per = quadrature_class_errors(simplex_centers(3, 2.0, 2), 1.0)
    assert np.ptp(per) <= 1e-6


def test_quadrature_small_sigma():
    assert quadrature_oracle_error(simplex_centers(3, 1.0, 2), 1e-3) < 1e-12


def test_quadrature_matches_grid_oracle(rng):
    for _ in range(3):
        pts = rng.standard_normal((3, 2)) * 1.5
        assert quadrature_oracle_error(pts, 1.0) == pytest.approx(grid_oracle(pts, 1.0), abs=2e-3)


def test_quadrature_rejects_3d():
    with pytest.raises(ValueError, match="oracle limited to 2-D"):
        quadrature_oracle_error(np.zeros((3, 3)), 1.0)


def test_binary_dispatch_equals_analytic(rng):
    task = random_task(rng, n=2, k=4, d=5)
    assert predict_accuracy(task, "shared-iso") == binary_predict(task)
    with pytest.raises(ValueError, match="insufficient samples"):
        predict_accuracy(random_task(rng, n=2, k=1, d=5))


def test_binary_with_full_model_uses_sampling(rng):
    task = random_task(rng, n=2, k=4, d=5)
    assert predict_accuracy(task, mc=MonteCarloConfig(1000)).method == "monte_carlo"


def test_multiclass_prediction_in_range(rng):
    for variant in ("identity", "shared-iso", "iso-per-class", "full"):
        est = predict_accuracy(random_task(rng, n=4, k=6, d=5), variant, mc=MonteCarloConfig(5000))
        assert est.method == "monte_carlo"
        assert est.variant == variant
        assert 0 <= est.p_error <= 0.75


def test_full_covariance_prediction_near_oracle(rng):
    # large k: the fitted model is close to the truth, so the prediction is
    # close to the error of the true Gaussian pipeline
    spec = SyntheticSpec(n_ways=3, k_shots=400, dim=2, snr_db=1.0, seed=5, n_query=0)
    st = generate_isotropic_task(spec)
    est = predict_accuracy(st.task, "full", mc=MonteCarloConfig(100_000))
    assert est.p_error == pytest.approx(quadrature_oracle_error(st.centers, 1.0), abs=0.02)


def test_identical_means_give_chance():
    from fsgen.core import FewShotTask
    block = np.array([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]])
    task = FewShotTask.from_blocks({c: block for c in range(3)})
    assert predict_accuracy(task).p_error == pytest.approx(2 / 3)


def test_bias_correction_raises_predicted_error_on_average():
    diffs = []
    for s in range(200):
        task = generate_isotropic_task(SyntheticSpec(5, 5, 16, -3.0, seed=s, n_query=0)).task
        mc = MonteCarloConfig(2000, seed=s)
        diffs.append(predict_accuracy(task, mc=mc).p_error - predict_accuracy(task, correct=False, mc=mc).p_error)
    assert np.mean(diffs) > 0
