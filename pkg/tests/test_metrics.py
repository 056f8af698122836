import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsgen.metrics import gaussian_kl, mape, mean_and_se, model_selection_experiment, roc_curve
from fsgen.synthetic import anisotropic_reference_tasks


def pair_count_auc(scores, positive):
    pos = [s for s, p in zip(scores, positive) if p]
    neg = [s for s, p in zip(scores, positive) if not p]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


def test_mape_examples():
    assert mape(0.3, 0.3) == 0.0
    assert mape(0.1, 0.2) == pytest.approx(0.125)
    assert mape(0.25, 0.2) == pytest.approx(mape(0.15, 0.2))


def test_mape_undefined_at_zero_accuracy():
    with pytest.raises(ValueError, match="undefined MAPE at zero accuracy"):
        mape(0.5, 1.0)


def test_mape_batch_mean_permutation_invariant(rng):
    p = rng.uniform(0, 0.8, 50)
    q = rng.uniform(0, 0.8, 50)
    perm = rng.permutation(50)
    assert np.mean(mape(p, q)) == pytest.approx(np.mean(mape(p[perm], q[perm])), rel=1e-15)


def test_mean_and_se():
    m, se = mean_and_se([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5
    assert se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)


def test_roc_perfect_order():
    assert roc_curve([0.9, 0.8, 0.7, 0.6], [0.95, 0.9, 0.5, 0.4]).auc == 1.0


def test_roc_all_scores_equal():
    roc = roc_curve([0.5] * 4, [0.9, 0.2, 0.95, 0.1])
    assert roc.auc == 0.5
    assert len(roc.fpr) == 2


def test_roc_hand_case():
    roc = roc_curve([0.9, 0.8, 0.7, 0.6], [0.9, 0.5, 0.9, 0.5], threshold=0.85)
    assert roc.auc == pytest.approx(0.75)
    assert roc.auc == pytest.approx(pair_count_auc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]))


def test_roc_threshold_is_inclusive():
    roc = roc_curve([0.2, 0.1], [0.85, 0.84])
    assert roc.auc == 1.0


def test_roc_degenerate():
    with pytest.raises(ValueError, match="degenerate ROC"):
        roc_curve([0.1, 0.2], [0.5, 0.6])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.booleans()), min_size=2, max_size=40))
def test_auc_equals_pair_count(pairs):
    scores = [s / 20 for s, _ in pairs]
    pos = [p for _, p in pairs]
    if all(pos) or not any(pos):
        return
    truths = [0.9 if p else 0.5 for p in pos]
    assert roc_curve(scores, truths).auc == pytest.approx(pair_count_auc(scores, pos), abs=1e-12)


def test_kl_identical():
    assert gaussian_kl([1.0, 2.0], np.diag([1.0, 3.0]), [1.0, 2.0], np.diag([1.0, 3.0])) == 0.0


@pytest.mark.parametrize("delta", [0.3, 1.0, 2.5])
def test_kl_mean_shift(delta):
    assert gaussian_kl([0.0], [[1.0]], [delta], [[1.0]]) == pytest.approx(delta ** 2 / 2)


def test_kl_variance_ratio():
    assert gaussian_kl([0.0], [[1.0]], [0.0], [[4.0]]) == pytest.approx(0.5 * (0.25 - 1 + np.log(4)))
    assert gaussian_kl([0.0], [[1.0]], [0.0], [[4.0]]) == pytest.approx(0.3181, abs=1e-4)


def test_kl_singular_reference():
    with pytest.raises(ValueError, match="singular"):
        gaussian_kl([0, 0], np.eye(2), [0, 0], np.diag([1.0, 0.0]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), d=st.integers(1, 5))
def test_kl_nonnegative(seed, d):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((2, d, d))
    kl = gaussian_kl(rng.standard_normal(d), A @ A.T + 0.1 * np.eye(d),
                     rng.standard_normal(d), B @ B.T + 0.1 * np.eye(d))
    assert kl >= 0


def test_model_selection_self_fit_is_zero():
    refs = anisotropic_reference_tasks(3, 4, 2, pool=150, seed=1)
    rows = model_selection_experiment(refs, [150])
    full = next(r for r in rows if r["model"] == "full")
    assert full["mean_kl"] < 1e-4


def test_model_selection_identity_worse_on_anisotropic():
    refs = anisotropic_reference_tasks(5, 8, 10, pool=500, seed=2)
    rows = {(r["k"], r["model"]): r["mean_kl"] for r in model_selection_experiment(refs, [2, 200])}
    assert rows[(200, "identity")] > rows[(200, "full")]
    assert rows[(2, "shared-iso")] < rows[(2, "full")]


def test_model_selection_pool_too_small():
    refs = anisotropic_reference_tasks(3, 4, 1, pool=50)
    with pytest.raises(ValueError, match="pool"):
        model_selection_experiment(refs, [5])
