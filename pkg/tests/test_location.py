import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from conftest import random_orthogonal
from robmix.errors import InvalidInputError
from robmix.location import (
    AsgdConfig,
    WeiszfeldConfig,
    asgd_median,
    weighted_coordinate_median,
    weiszfeld_median,
)


def geometric_objective(X, w, m):
    return float(w @ np.linalg.norm(X - m, axis=1))


def test_single_point():
    p = np.array([[1.5, -2.0, 3.0]])
    assert np.array_equal(weiszfeld_median(p), p[0])


def test_equilateral_triangle():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    assert np.allclose(weiszfeld_median(X), X.mean(axis=0), atol=1e-6)


def test_four_points_against_nelder_mead():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
    w = np.ones(4)
    # oracle: derivative-free minimisation from several starts
    best = min(
        (
            minimize(lambda m: geometric_objective(X, w, m), x0, method="Nelder-Mead",
                     options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
            for x0 in ([0.0, 0.0], [2.0, 2.0], [0.3, 0.3])
        ),
        key=lambda r: r.fun,
    )
    m = weiszfeld_median(X)
    assert np.allclose(m, best.x, atol=1e-4)


def test_errors():
    X = np.zeros((3, 2))
    with pytest.raises(InvalidInputError):
        weiszfeld_median(X, np.zeros(3))
    with pytest.raises(InvalidInputError):
        weiszfeld_median([[0.0, np.inf]])
    with pytest.raises(InvalidInputError):
        weiszfeld_median(X, [1.0, -1.0, 1.0])
    with pytest.raises(InvalidInputError):
        asgd_median([[np.nan, 0.0]])
    with pytest.raises(InvalidInputError):
        AsgdConfig(gamma=0.5)
    with pytest.raises(InvalidInputError):
        WeiszfeldConfig(tol=0)


def test_zero_weights_drop_points(rng):
    X = rng.normal(size=(30, 3))
    w = np.r_[np.ones(20), np.zeros(10)]
    assert np.allclose(weiszfeld_median(X, w), weiszfeld_median(X[:20]), atol=1e-12)


def test_objective_monotone(rng):
    for _ in range(10):
        X = rng.standard_t(2, size=(200, 4))
        w = rng.uniform(0.1, 2.0, 200)
        trace = []
        weiszfeld_median(X, w, trace=trace)
        assert len(trace) > 1
        assert np.all(np.diff(trace) <= 1e-12 * trace[0])


def test_starting_on_a_data_point():
    # the coordinate median of these points is the data point (0, 0)
    X = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [0.1, 0.2]])
    m = weiszfeld_median(X)
    assert np.all(np.isfinite(m))
    trace = []
    weiszfeld_median(X, trace=trace)
    assert np.all(np.diff(trace) <= 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_equivariances(seed, d):
    r = np.random.default_rng(seed)
    X = r.standard_t(3, size=(40, d)) * 3
    w = r.uniform(0.1, 1.0, 40)
    m = weiszfeld_median(X, w)
    c = r.normal(scale=5, size=d)
    assert np.allclose(weiszfeld_median(X + c, w), m + c, atol=1e-8 * max(1, np.abs(c).max()))
    Q = random_orthogonal(r, d)
    assert np.allclose(weiszfeld_median(X @ Q.T, w), Q @ m, atol=1e-6)
    assert np.allclose(weiszfeld_median(X, 7.3 * w), m, atol=1e-12 * max(1, np.abs(m).max()), rtol=0)


def test_weighted_coordinate_median():
    X = np.array([[1.0], [2.0], [3.0], [10.0]])
    assert weighted_coordinate_median(X, np.array([1.0, 1.0, 1.0, 5.0]))[0] == 10.0
    assert weighted_coordinate_median(X, np.array([3.0, 1.0, 1.0, 1.0]))[0] == 1.0


def test_asgd_constant_stream():
    p = np.array([2.0, -1.0])
    assert np.array_equal(asgd_median(np.tile(p, (100, 1)), init=p), p)


def test_asgd_gaussian_center(rng):
    X = rng.standard_normal((50_000, 2))
    m = asgd_median(X)
    assert np.linalg.norm(m) < 0.05
    assert np.linalg.norm(m - weiszfeld_median(X)) < 0.05


def test_asgd_deterministic(rng):
    X = rng.standard_normal((1000, 3))
    assert np.array_equal(asgd_median(X), asgd_median(X))
    assert not np.array_equal(asgd_median(X), asgd_median(X[::-1]))
