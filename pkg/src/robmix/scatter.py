"""Median covariation matrix (MCM) estimation.

The MCM is the geometric median, in Frobenius geometry, of the centred outer
products ``(X_i - m)(X_i - m)^T``. The batch estimator runs the Weiszfeld
iteration on those matrices; the streaming estimator runs a joint averaged
stochastic gradient recursion for the median and the MCM.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _kernels
from .errors import InvalidInputError
from .linalg import as_symmetric, psd_project, sym_eigen
from .location import (
    AsgdConfig,
    WeiszfeldConfig,
    _weiszfeld,
    check_points,
    weighted_coordinate_median,
)


@dataclass(frozen=True)
class McmEstimate:
    """A median covariation matrix, raw and projected onto the PD cone."""

    center: NDArray[np.float64]
    mcm: NDArray[np.float64]
    mcm_psd: NDArray[np.float64]


def _triu(d):
    iu = np.triu_indices(d)
    # off-diagonal entries appear twice in the full Frobenius norm
    scale = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return iu, scale


def outer_vech(X: NDArray, center: NDArray) -> NDArray:
    """Rows ``vech((x - c)(x - c)^T)`` scaled so Euclidean norm equals Frobenius norm."""
    Z = X - center
    iu, scale = _triu(X.shape[1])
    return Z[:, iu[0]] * Z[:, iu[1]] * scale


def unvech(v: NDArray, d: int) -> NDArray:
    iu, scale = _triu(d)
    M = np.zeros((d, d))
    M[iu] = v / scale
    M[(iu[1], iu[0])] = M[iu]
    return M


def vech(M: NDArray) -> NDArray:
    iu, scale = _triu(M.shape[0])
    return M[iu] * scale


def weiszfeld_mcm(
    points: ArrayLike,
    center: ArrayLike,
    weights: ArrayLike | None = None,
    cfg: WeiszfeldConfig = WeiszfeldConfig(),
    trace: list | None = None,
    init: ArrayLike | None = None,
) -> McmEstimate:
    """Weighted MCM around ``center`` by Weiszfeld iteration on outer products.

    The iteration lives in the ``d(d+1)/2`` symmetric coordinates with the
    full-matrix Frobenius norm, so every iterate is exactly symmetric. It
    starts from ``init`` (a symmetric matrix) or, by default, from the
    weighted coordinate-wise median of the outer products, and stops with the
    same relative-step rule as :func:`weiszfeld_median`.
    ``trace`` collects the weighted objective ``sum w_i ||M_i - V_t||_F``.
    """
    X, w = check_points(points, weights)
    c = np.asarray(center, dtype=float).reshape(X.shape[1])
    if not np.all(np.isfinite(c)):
        raise InvalidInputError("center must be finite")
    keep = w > 0
    X, w = X[keep], w[keep]
    d = X.shape[1]
    Y = outer_vech(X, c)
    if init is None:
        v0 = weighted_coordinate_median(Y, w)
    else:
        v0 = vech(as_symmetric(init, "init"))
        if v0.shape != (Y.shape[1],):
            raise InvalidInputError("init must be a (d, d) matrix")
    v = _weiszfeld(Y, w, v0, cfg, trace)
    V = unvech(v, d)
    return McmEstimate(center=c, mcm=V, mcm_psd=psd_project(V))


def asgd_median_mcm(
    stream: ArrayLike,
    weights: ArrayLike | None = None,
    cfg: AsgdConfig = AsgdConfig(),
    init_m: ArrayLike | None = None,
    init_v: ArrayLike | None = None,
) -> tuple[NDArray[np.float64], McmEstimate]:
    """Joint single-pass estimate of the median and the MCM.

    Each observation first moves the scatter iterate, using the outer product
    centred at the current averaged median, then moves the median iterate;
    both are Polyak-averaged. ``init_m`` defaults to the first observation and
    ``init_v`` to the identity; ``init_v`` must be symmetric positive definite.

    Returns
    -------
    median : ndarray, shape (d,)
    estimate : McmEstimate
        Averaged MCM, with ``center`` set to the returned median.
    """
    X, w = check_points(stream, weights)
    d = X.shape[1]
    m0 = X[0].copy() if init_m is None else np.asarray(init_m, dtype=float).reshape(d)
    if not np.all(np.isfinite(m0)):
        raise InvalidInputError("init_m must be finite")
    V0 = np.eye(d) if init_v is None else as_symmetric(init_v, "init_v")
    if V0.shape != (d, d) or sym_eigen(V0).values[-1] <= 0:
        raise InvalidInputError("init_v must be a symmetric positive definite (d, d) matrix")
    mbar, Vbar = _kernels.asgd_median_mcm_loop(
        np.ascontiguousarray(X), w, m0, V0, float(cfg.c_gamma), float(cfg.gamma), int(cfg.passes)
    )
    Vbar = 0.5 * (Vbar + Vbar.T)
    return mbar, McmEstimate(center=mbar, mcm=Vbar, mcm_psd=psd_project(Vbar))
