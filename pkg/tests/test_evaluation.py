from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from robmix.errors import InvalidInputError
from robmix.evaluation import (
    RESULT_COLUMNS,
    EvalReport,
    adjusted_rand_index,
    evaluate_fit,
    match_and_mse,
    result_row,
    sq_frobenius_error,
)


def params(centers, sigma=None):
    centers = np.asarray(centers, dtype=float)
    if sigma is None:
        sigma = np.tile(np.eye(centers.shape[1]), (centers.shape[0], 1, 1))
    return SimpleNamespace(centers=centers, sigma=np.asarray(sigma, dtype=float))


def test_ari_examples():
    a = [1, 1, 2, 2, 3]
    assert adjusted_rand_index(a, a) == 1.0
    assert adjusted_rand_index([1, 1, 2, 2], [1, 2, 1, 2]) == pytest.approx(-0.5)
    assert adjusted_rand_index(a, [7, 7, 0, 0, 5]) == 1.0
    with pytest.raises(InvalidInputError):
        adjusted_rand_index([1, 2], [1, 2, 3])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 3)), min_size=2, max_size=60))
def test_ari_against_reference_and_symmetry(pairs):
    a, b = map(np.array, zip(*pairs))
    ours = adjusted_rand_index(a, b)
    assert ours == adjusted_rand_index(b, a)
    assert ours == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)


def test_match_identity_and_swap():
    truth = params([[0, 0], [2, 0], [5, 5]], [np.eye(2), 2 * np.eye(2), 3 * np.eye(2)])
    rep = match_and_mse(truth, truth)
    assert (rep.mse_mu, rep.mse_sigma, rep.matching) == (0.0, 0.0, (0, 1, 2))
    swapped = params(truth.centers[[1, 0, 2]], truth.sigma[[1, 0, 2]])
    rep = match_and_mse(truth, swapped)
    assert (rep.mse_mu, rep.mse_sigma, rep.matching) == (0.0, 0.0, (1, 0, 2))


def test_match_hand_example():
    rep = match_and_mse(params([[0, 0], [2, 0]]), params([[2, 1], [0, 1]]))
    assert rep.matching == (1, 0)
    assert rep.mse_mu == pytest.approx(0.5)
    assert rep.mse_sigma == 0.0


def test_sigma_formula():
    truth = params([[0.0, 0.0]], [np.eye(2)])
    est = params([[0.0, 0.0]], [[[2.0, 1.0], [1.0, 1.0]]])
    # ||D||_F^2 / p^2 = (1 + 1 + 1) / 4
    assert match_and_mse(truth, est).mse_sigma == pytest.approx(0.75)
    assert sq_frobenius_error(truth.sigma[0], est.sigma[0]) == pytest.approx(3.0)


def test_k_mismatch():
    with pytest.raises(InvalidInputError):
        match_and_mse(params([[0, 0], [1, 1]]), params([[0, 0]]))


def test_relabel_invariance_and_quadratic_scaling(rng):
    truth = params(rng.normal(size=(4, 3)) * 5)
    pert = rng.normal(size=(4, 3))
    perm = [2, 0, 3, 1]
    est = params(truth.centers + 0.1 * pert)
    a = match_and_mse(truth, est)
    b = match_and_mse(truth, params(est.centers[perm], est.sigma[perm]))
    assert a.mse_mu == pytest.approx(b.mse_mu, rel=1e-14)
    small = match_and_mse(truth, params(truth.centers + 1e-3 * pert)).mse_mu
    big = match_and_mse(truth, params(truth.centers + 1e-2 * pert)).mse_mu
    assert big / small == pytest.approx(100, rel=0.05)


def test_result_row():
    rep = EvalReport(0.5, 0.1, None, None, 3, True)
    row = result_row("robust", "a", 0.05, 7, rep)
    assert row == "robust,a,0.05,7,0.5,0.10000000000000001,,3,1"
    assert len(row.split(",")) == len(RESULT_COLUMNS)


def test_evaluate_fit_exclude_mask():
    truth = SimpleNamespace(centers=np.array([[0.0], [5.0]]), sigma=np.ones((2, 1, 1)))
    tau = np.eye(2)[[0, 0, 1, 1, 1]]
    est = SimpleNamespace(K=2, centers=truth.centers, sigma=truth.sigma)
    fit = SimpleNamespace(labels=lambda: tau.argmax(axis=1), params=est, converged=True)
    labels = np.array([0, 0, 1, 1, 0])
    flags = np.array([False, False, False, False, True])
    assert evaluate_fit(truth, labels, fit).ari < 1
    assert evaluate_fit(truth, labels, fit, exclude=flags).ari == 1.0
    with pytest.raises(InvalidInputError):
        evaluate_fit(truth, labels, fit, exclude=flags[:3])
