"""Geometric median estimation.

Two estimators of ``argmin_m sum_i w_i ||X_i - m||``:

* :func:`weiszfeld_median`, the batch fix-point iteration
  ``m <- sum(w_i X_i / ||X_i - m||) / sum(w_i / ||X_i - m||)``;
* :func:`asgd_median`, a single-pass averaged stochastic gradient recursion
  with steps ``c_gamma * k**(-gamma)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _kernels
from .errors import InvalidInputError


@dataclass(frozen=True)
class WeiszfeldConfig:
    """Stopping rule for the Weiszfeld iteration.

    ``tol`` bounds the relative step ``||m_{t+1} - m_t|| / max(s, ||m_t||)``
    where ``s`` is the weighted mean distance of the data to the starting
    point, which keeps the rule unit-free.
    ``singularity_eps`` is relative to the data scale: points closer than
    ``singularity_eps * scale`` to the iterate count as sitting on it, and
    the step is then taken with the Vardi-Zhang rule instead of dividing by
    their distance.
    """

    tol: float = 1e-8
    max_iter: int = 200
    singularity_eps: float = 1e-10

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidInputError("tol must be positive")
        if self.max_iter < 1:
            raise InvalidInputError("max_iter must be >= 1")
        if not self.singularity_eps > 0:
            raise InvalidInputError("singularity_eps must be positive")


@dataclass(frozen=True)
class AsgdConfig:
    c_gamma: float = 1.0
    gamma: float = 0.75
    passes: int = 1

    def __post_init__(self):
        if not self.c_gamma > 0:
            raise InvalidInputError("c_gamma must be positive")
        if not 0.5 < self.gamma < 1.0:
            raise InvalidInputError("gamma must lie in (1/2, 1)")
        if self.passes < 1:
            raise InvalidInputError("passes must be >= 1")


def check_points(points: ArrayLike, weights: ArrayLike | None = None):
    """Validate an ``(n, d)`` sample and its nonnegative weights."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise InvalidInputError(f"points must be a non-empty (n, d) array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("points contain non-finite values")
    if weights is None:
        w = np.ones(X.shape[0])
    else:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape[0] != X.shape[0]:
            raise InvalidInputError(f"{w.shape[0]} weights for {X.shape[0]} points")
        if not np.all(np.isfinite(w)):
            raise InvalidInputError("weights contain non-finite values")
        if np.any(w < 0):
            raise InvalidInputError("weights must be nonnegative")
        if not np.any(w > 0):
            raise InvalidInputError("at least one weight must be positive")
    return X, w


def weighted_coordinate_median(X: NDArray, w: NDArray) -> NDArray:
    """Per-column weighted median (lower median on exact ties of the cumulative weight)."""
    out = np.empty(X.shape[1])
    half = 0.5 * w.sum()
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        cum = np.cumsum(w[order])
        out[j] = X[order[np.searchsorted(cum, half)], j]
    return out


def weighted_objective(X: NDArray, w: NDArray, m: NDArray) -> float:
    return float(w @ np.sqrt(((X - m) ** 2).sum(axis=1)))


def _weiszfeld(X, w, m, cfg, trace):
    scale = w @ np.sqrt(((X - m) ** 2).sum(axis=1)) / w.sum()
    if scale == 0.0:
        return m
    eps = cfg.singularity_eps * scale
    if trace is not None:
        trace.append(weighted_objective(X, w, m))
    for _ in range(cfg.max_iter):
        dist = np.sqrt(((X - m) ** 2).sum(axis=1))
        near = dist < eps
        if not near.any():
            coef = w / dist
            m_new = (coef @ X) / coef.sum()
        else:
            # iterate sits on data: Vardi-Zhang step, which leaves the point
            # only if the pull of the other points beats its weight
            far = ~near
            if not far.any():
                break
            eta = w[near].sum()
            coef = w[far] / dist[far]
            pull = coef @ (X[far] - m)
            r = np.sqrt(pull @ pull)
            if r <= eta:
                break
            m_new = (1.0 - eta / r) * ((coef @ X[far]) / coef.sum()) + (eta / r) * m
        step = np.sqrt(((m_new - m) ** 2).sum()) / max(scale, np.sqrt((m**2).sum()))
        m = m_new
        if trace is not None:
            trace.append(weighted_objective(X, w, m))
        if step < cfg.tol:
            break
    return m


def weiszfeld_median(
    points: ArrayLike,
    weights: ArrayLike | None = None,
    cfg: WeiszfeldConfig = WeiszfeldConfig(),
    init: ArrayLike | None = None,
    trace: list | None = None,
) -> NDArray[np.float64]:
    """Weighted geometric median by the Weiszfeld fix-point iteration.

    Parameters
    ----------
    points : array_like, shape (n, d)
    weights : array_like, shape (n,), optional
        Nonnegative weights, at least one positive. Unit weights by default.
        Zero-weight points are removed before iterating.
    cfg : WeiszfeldConfig
    init : array_like, shape (d,), optional
        Starting point. Defaults to the weighted coordinate-wise median.
    trace : list, optional
        If given, the weighted objective ``sum w_i ||X_i - m_t||`` is appended
        for the starting point and every iterate.

    Returns
    -------
    ndarray, shape (d,)
    """
    X, w = check_points(points, weights)
    keep = w > 0
    X, w = X[keep], w[keep]
    if init is None:
        m = weighted_coordinate_median(X, w)
    else:
        m = np.asarray(init, dtype=float).reshape(X.shape[1])
        if not np.all(np.isfinite(m)):
            raise InvalidInputError("init must be finite")
    return _weiszfeld(X, w, m, cfg, trace)


def asgd_median(
    stream: ArrayLike,
    weights: ArrayLike | None = None,
    cfg: AsgdConfig = AsgdConfig(),
    init: ArrayLike | None = None,
) -> NDArray[np.float64]:
    """Averaged stochastic gradient estimate of the (weighted) geometric median.

    The stream is consumed in row order, ``cfg.passes`` times. Observations at
    distance below 1e-12 from the current iterate skip the gradient step but
    still count in the running average. ``init`` defaults to the first
    observation.
    """
    X, w = check_points(stream, weights)
    if init is None:
        m0 = X[0].copy()
    else:
        m0 = np.asarray(init, dtype=float).reshape(X.shape[1])
        if not np.all(np.isfinite(m0)):
            raise InvalidInputError("init must be finite")
    return _kernels.asgd_median_loop(
        np.ascontiguousarray(X), w, m0, float(cfg.c_gamma), float(cfg.gamma), int(cfg.passes)
    )
