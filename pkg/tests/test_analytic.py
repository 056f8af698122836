from statistics import NormalDist

import numpy as np
import pytest

from fsgen.analytic import (binary_error_probability, binary_predict, lemma1_bound,
                            std_normal_cdf, std_normal_quantile)
from fsgen.core import FewShotTask
from conftest import random_task

N = NormalDist()


def test_cdf_at_zero():
    assert std_normal_cdf(0.0) == 0.5


@pytest.mark.parametrize("x", [-6.0, -1.3, 0.2, 1.0, 3.7])
def test_cdf_matches_reference(x):
    assert std_normal_cdf(x) == pytest.approx(N.cdf(x), abs=1e-12)


def test_quantile_975():
    assert std_normal_quantile(0.975) == pytest.approx(N.inv_cdf(0.975), abs=1e-10)
    assert std_normal_quantile(0.975) == pytest.approx(1.959964, abs=1e-6)


@pytest.mark.parametrize("p", [0.01, 0.5, 0.99])
def test_quantile_inverts_cdf(p):
    assert std_normal_cdf(std_normal_quantile(p)) == pytest.approx(p, abs=1e-10)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_quantile_domain(p):
    with pytest.raises(ValueError):
        std_normal_quantile(p)


def test_error_at_zero_distance():
    assert binary_error_probability(0.0, 1.3) == 0.5


def test_error_at_two_sigma():
    assert binary_error_probability(2.0, 1.0) == pytest.approx(1 - N.cdf(1.0), abs=1e-12)
    assert binary_error_probability(2.0, 1.0) == pytest.approx(0.158655, abs=1e-6)


def test_error_monotone_and_vanishing():
    r = np.linspace(0, 40, 200)
    p = binary_error_probability(r, 1.0)
    assert np.all(np.diff(p) < 0)
    assert p[-1] < 1e-80
    s = np.linspace(0.1, 5, 50)
    assert np.all(np.diff(binary_error_probability(1.0, s)) > 0)


def test_error_rejects_bad_sigma():
    with pytest.raises(ValueError):
        binary_error_probability(1.0, 0.0)


def test_bound_reference_value():
    expected = (1 / np.sqrt(2 * np.pi)) * N.inv_cdf(0.975) / np.sqrt(100)
    assert lemma1_bound(50, 0.05) == pytest.approx(expected, rel=1e-12)
    # 0.3989423 * 1.959964 / 10 rounds to 0.078191
    assert lemma1_bound(50, 0.05) == pytest.approx(0.0781913, abs=1e-7)


def test_bound_vanishes_as_alpha_to_one():
    assert lemma1_bound(10, 1 - 1e-12) < 1e-11


def test_bound_sqrt_scaling():
    assert lemma1_bound(80, 0.1) == pytest.approx(lemma1_bound(20, 0.1) / 2, rel=1e-14)


def test_bound_strictly_decreasing_in_k():
    eps = lemma1_bound(np.arange(1, 50), 0.05)
    assert np.all(np.diff(eps) < 0)


@pytest.mark.parametrize("alpha", [0.0, 1.0, 2.0])
def test_bound_rejects_alpha(alpha):
    with pytest.raises(ValueError):
        lemma1_bound(5, alpha)


def test_predict_requires_two_classes(rng):
    with pytest.raises(ValueError, match="analytic path requires two classes"):
        binary_predict(random_task(rng, n=3))


def test_predict_coincident_means_gives_chance():
    block = np.array([[0.0, 1.0], [1.0, 0.0]])
    est = binary_predict(FewShotTask.from_blocks({0: block, 1: block[::-1]}))
    assert est.p_error == 0.5


def test_predict_carries_bound_and_provenance(rng):
    est = binary_predict(random_task(rng, n=2, k=7), alpha=0.1)
    assert est.method == "analytic"
    assert est.bound_half_width == pytest.approx(lemma1_bound(7, 0.1))
    assert 0 <= est.p_error <= 0.5


def test_predict_matches_hand_formula(rng):
    task = random_task(rng, n=2, k=5, d=6, spread=1.5)
    a, b = task.support_by_class.values()
    ma, mb = a.mean(0), b.mean(0)
    d = 6
    s2_orig = (np.sum((a - ma) ** 2) + np.sum((b - mb) ** 2)) / (2 * 4 * d)
    r2 = max(np.sum((ma - mb) ** 2) - 2 * d * s2_orig / 5, 1e-12)
    u = (mb - ma) / np.linalg.norm(mb - ma)
    s2_proj = (np.sum(((a - ma) @ u) ** 2) + np.sum(((b - mb) @ u) ** 2)) / (2 * 4)
    expected = 1 - N.cdf(np.sqrt(r2) / (2 * np.sqrt(s2_proj)))
    assert binary_predict(task).p_error == pytest.approx(expected, abs=1e-12)
