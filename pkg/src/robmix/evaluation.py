"""Clustering and estimation accuracy: ARI, matched MSEs and result rows.

Estimated clusters are matched to true ones by the permutation minimising
the summed squared distances between centers, searched exhaustively.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from .errors import InvalidInputError
from .simulation import format_float

MAX_EXHAUSTIVE_K = 8
RESULT_COLUMNS = ("method", "scenario", "delta", "seed", "ari", "mse_mu", "mse_sigma", "khat", "converged")


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return (x * (x - 1.0) / 2.0).sum()


def adjusted_rand_index(a: ArrayLike, b: ArrayLike) -> float:
    """Hubert-Arabie adjusted Rand index between two labelings.

    Labels can be any hashable values; only the induced partitions matter.
    Two single-cluster (or two all-singleton) partitions score 1.
    """
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    if a.shape != b.shape:
        raise InvalidInputError(f"label vectors differ in length: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    if n < 2:
        raise InvalidInputError("need at least two labels")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1.0)
    index = _comb2(table)
    sa = _comb2(table.sum(axis=1))
    sb = _comb2(table.sum(axis=0))
    expected = sa * sb / (n * (n - 1) / 2.0)
    max_index = 0.5 * (sa + sb)
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


@dataclass(frozen=True)
class EvalReport:
    """Accuracy of one fit. MSE fields are None when they cannot be matched."""

    ari: float | None
    mse_mu: float | None
    mse_sigma: float | None
    matching: tuple[int, ...] | None
    khat: int | None = None
    converged: bool | None = None


def match_clusters(true_centers: ArrayLike, est_centers: ArrayLike) -> tuple[int, ...]:
    """Permutation ``s`` minimising ``sum_k ||mu_k - mu_hat_{s(k)}||^2``.

    Ties keep the lexicographically first permutation, so identical centers
    give the identity.
    """
    T = np.atleast_2d(np.asarray(true_centers, dtype=float))
    E = np.atleast_2d(np.asarray(est_centers, dtype=float))
    if T.shape != E.shape:
        raise InvalidInputError(f"center arrays differ in shape: {T.shape} vs {E.shape}")
    K = T.shape[0]
    if K > MAX_EXHAUSTIVE_K:
        raise InvalidInputError(f"exhaustive matching supports K <= {MAX_EXHAUSTIVE_K}")
    cost = ((T[:, None, :] - E[None, :, :]) ** 2).sum(axis=2)
    rows = np.arange(K)
    best, best_cost = None, np.inf
    for perm in itertools.permutations(range(K)):
        c = cost[rows, perm].sum()
        if c < best_cost:
            best, best_cost = perm, c
    return tuple(int(i) for i in best)


def match_and_mse(truth, est) -> EvalReport:
    """Matched MSE of the centers and covariances.

    ``truth`` and ``est`` are any objects with ``centers`` (K, d) and
    ``sigma`` (K, d, d), e.g. :class:`~robmix.mixture.MixtureParams`.

    ``MSE(mu) = mean_k ||mu_k - mu_hat_s(k)||^2 / d`` and
    ``MSE(Sigma) = mean_k ||Sigma_k - Sigma_hat_s(k)||_F^2 / d^2``.
    ``matching[k]`` is the estimated cluster matched to true cluster k.

    Raises
    ------
    InvalidInputError
        If K or d differ.
    """
    Tm = np.atleast_2d(np.asarray(truth.centers, dtype=float))
    Em = np.atleast_2d(np.asarray(est.centers, dtype=float))
    if Tm.shape[0] != Em.shape[0]:
        raise InvalidInputError(f"cluster counts differ: {Tm.shape[0]} vs {Em.shape[0]}")
    if Tm.shape[1] != Em.shape[1]:
        raise InvalidInputError("dimensions differ")
    d = Tm.shape[1]
    perm = match_clusters(Tm, Em)
    idx = list(perm)
    mse_mu = float(((Tm - Em[idx]) ** 2).sum(axis=1).mean() / d)
    Ts = np.asarray(truth.sigma, dtype=float)
    Es = np.asarray(est.sigma, dtype=float)[idx]
    mse_sigma = float(((Ts - Es) ** 2).sum(axis=(1, 2)).mean() / d**2)
    return EvalReport(ari=None, mse_mu=mse_mu, mse_sigma=mse_sigma, matching=perm)


def sq_frobenius_error(Sigma: ArrayLike, Sigma_hat: ArrayLike) -> float:
    """``||Sigma - Sigma_hat||_F^2``, the single-covariance error measure."""
    A = np.asarray(Sigma, dtype=float)
    B = np.asarray(Sigma_hat, dtype=float)
    if A.shape != B.shape:
        raise InvalidInputError(f"shape mismatch: {A.shape} vs {B.shape}")
    return float(((A - B) ** 2).sum())


def evaluate_fit(truth, true_labels: ArrayLike, fit, exclude: ArrayLike | None = None) -> EvalReport:
    """ARI of ``fit.labels()`` against ``true_labels`` plus matched MSEs.

    Contaminated rows keep their source cluster's label and count in the ARI
    unless flagged in the boolean mask ``exclude`` (e.g. the outlier flags).
    MSEs are left missing when the fitted K differs from the true K.
    """
    true_labels = np.asarray(true_labels).reshape(-1)
    labels = fit.labels()
    if exclude is not None:
        keep = ~np.asarray(exclude, dtype=bool).reshape(-1)
        if keep.shape != true_labels.shape:
            raise InvalidInputError("exclude mask must match the labels in length")
        true_labels, labels = true_labels[keep], labels[keep]
    ari = adjusted_rand_index(true_labels, labels)
    K_true = np.atleast_2d(truth.centers).shape[0]
    if fit.params.K == K_true:
        rep = match_and_mse(truth, fit.params)
        return EvalReport(ari, rep.mse_mu, rep.mse_sigma, rep.matching, fit.params.K, fit.converged)
    return EvalReport(ari, None, None, None, fit.params.K, fit.converged)


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format_float(float(x))
    return str(x)


def result_row(method: str, scenario: str, delta: float, seed: int, report: EvalReport) -> str:
    """One CSV line (no newline) in :data:`RESULT_COLUMNS` order; missing values are empty.

    ``delta`` is echoed in shortest round-trip form, measured values with 17
    significant digits.
    """
    vals = (
        method,
        scenario,
        repr(float(delta)),
        int(seed),
        report.ari,
        report.mse_mu,
        report.mse_sigma,
        report.khat,
        report.converged,
    )
    return ",".join(_cell(v) for v in vals)
