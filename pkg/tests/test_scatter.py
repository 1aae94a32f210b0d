import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from conftest import random_orthogonal
from robmix.errors import InvalidInputError
from robmix.linalg import sym_eigen
from robmix.location import weiszfeld_median
from robmix.scatter import asgd_median_mcm, outer_vech, unvech, vech, weiszfeld_mcm
from robmix.simulation import SIGMA0


def chi2_1_median():
    return optimize.brentq(lambda x: stats.chi2.cdf(x, 1) - 0.5, 0.1, 1.0, xtol=1e-14)


def test_chi2_median_value():
    assert chi2_1_median() == pytest.approx(0.45494, abs=1e-5)


def test_vech_round_trip(rng):
    A = rng.normal(size=(4, 4))
    A = A + A.T
    assert np.allclose(unvech(vech(A), 4), A, rtol=1e-15, atol=1e-15)
    # the vech norm is the Frobenius norm of the full matrix
    assert np.linalg.norm(vech(A)) == pytest.approx(np.linalg.norm(A))
    x = rng.normal(size=(1, 4))
    assert np.allclose(unvech(outer_vech(x, np.zeros(4))[0], 4), np.outer(x, x))


def test_single_point_is_zero():
    p = np.array([[1.0, 2.0, 3.0]])
    est = weiszfeld_mcm(p, p[0])
    assert np.array_equal(est.mcm, np.zeros((3, 3)))
    assert sym_eigen(est.mcm_psd).values[-1] > 0


def test_one_dimensional_reduction(rng):
    x = rng.normal(size=(101, 1))
    c = np.array([0.3])
    assert weiszfeld_mcm(x, c).mcm[0, 0] == pytest.approx(np.median((x[:, 0] - 0.3) ** 2), abs=1e-10)
    w = rng.uniform(0.5, 1.5, 101)
    v = (x[:, 0] - 0.3) ** 2
    # weighted median oracle: minimiser of sum w |v - t| over the data values
    obj = [np.sum(w * np.abs(v - t)) for t in v]
    assert weiszfeld_mcm(x, c, w).mcm[0, 0] == pytest.approx(v[int(np.argmin(obj))], abs=1e-10)


def test_gaussian_one_dimensional_mcm(rng):
    x = rng.normal(scale=2.0, size=(5000, 1))
    m = weiszfeld_median(x)
    assert weiszfeld_mcm(x, m).mcm[0, 0] == pytest.approx(4 * chi2_1_median(), abs=0.08)


def test_objective_monotone(rng):
    X = rng.standard_t(3, size=(300, 3))
    trace = []
    weiszfeld_mcm(X, np.zeros(3), rng.uniform(0.2, 1, 300), trace=trace)
    assert len(trace) > 2
    assert np.all(np.diff(trace) <= 1e-12 * trace[0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.floats(0.05, 20))
def test_equivariance_and_symmetry(seed, d, c):
    r = np.random.default_rng(seed)
    X = r.standard_t(4, size=(60, d)) @ r.normal(size=(d, d))
    m = r.normal(size=d)
    V = weiszfeld_mcm(X, m).mcm
    assert np.abs(V - V.T).max() < 1e-12
    Q = random_orthogonal(r, d)
    VQ = weiszfeld_mcm(X @ Q.T, Q @ m).mcm
    assert np.allclose(VQ, Q @ V @ Q.T, atol=1e-6 * max(1, np.abs(V).max()))
    Vc = weiszfeld_mcm(c * X, c * m).mcm
    assert np.allclose(Vc, c**2 * V, rtol=1e-8, atol=1e-8 * c**2 * np.abs(V).max())


def test_mcm_psd_is_projection(rng):
    X = rng.normal(size=(50, 3))
    est = weiszfeld_mcm(X, np.zeros(3))
    assert est.center.shape == (3,)
    assert sym_eigen(est.mcm_psd).values[-1] > 0


def test_asgd_constant_stream_shrinks():
    p = np.array([1.0, -1.0])
    norms = []
    for n in (10, 100, 1000):
        m, est = asgd_median_mcm(np.tile(p, (n, 1)), init_m=p, init_v=np.eye(2))
        assert np.array_equal(m, p)
        norms.append(np.linalg.norm(est.mcm))
    assert norms[0] > norms[1] > norms[2]


def test_asgd_init_validation():
    X = np.zeros((5, 2))
    with pytest.raises(InvalidInputError):
        asgd_median_mcm(X, init_v=-np.eye(2))
    with pytest.raises(InvalidInputError):
        asgd_median_mcm(X, init_v=np.eye(3))


def test_asgd_agrees_with_weiszfeld(rng):
    X = rng.standard_normal((50_000, 2))
    _, est = asgd_median_mcm(X)
    ref = weiszfeld_mcm(X, weiszfeld_median(X)).mcm
    assert np.linalg.norm(est.mcm - ref) < 0.1


def test_asgd_eigenvectors_match_covariance(rng):
    L = np.linalg.cholesky(SIGMA0)
    X = rng.standard_normal((50_000, 5)) @ L.T
    _, est = asgd_median_mcm(X)
    _, V_mcm = sym_eigen(est.mcm)
    _, V_true = np.linalg.eigh(SIGMA0)
    V_true = V_true[:, ::-1]
    cosines = np.abs(np.sum(V_mcm * V_true, axis=0))
    angles = np.degrees(np.arccos(np.clip(cosines, 0, 1)))
    assert angles.max() < 10, angles
