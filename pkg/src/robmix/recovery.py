"""Rebuild a covariance matrix from a median covariation matrix.

For a symmetric law the MCM ``V`` and the covariance ``Sigma`` share their
eigenvectors, and the eigenvalues ``delta`` of ``V`` and ``lambda`` of
``Sigma`` are tied by

    delta_k = lambda_k * E[U_k^2 h(delta, lambda, U)] / E[h(delta, lambda, U)]

where ``U`` is the standardized law of the family and ``h`` the kernel of
:func:`h_kernel`. :func:`recover_eigenvalues` solves this relation for
``lambda`` by Monte-Carlo with one of three solvers; :func:`psi_u` wraps it
into the full ``V -> Sigma`` map.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _kernels
from .errors import InvalidInputError, NumericalFailureError
from .families import EmissionFamily, sample_standardized
from .linalg import psd_project, reconstruct, sym_eigen

H_GUARD = 1e-24
SOLVERS = ("fixpoint", "gradient", "robbins-monro")


@dataclass(frozen=True)
class RecoveryConfig:
    """Monte-Carlo budget and solver settings.

    ``mc_samples`` (N) and ``iterations`` (T) drive the fix-point and gradient
    solvers. Robbins-Monro makes one pass over ``rm_samples`` draws, which
    defaults to ``N * T`` (same computational budget). The gradient step at
    iteration t is ``grad_step * (1 + t)**(-grad_decay) / mean(h)``.
    """

    solver: str = "fixpoint"
    mc_samples: int = 2000
    iterations: int = 50
    c_gamma: float = 1.0
    gamma: float = 0.75
    omega: float = 2.0
    grad_step: float = 1.0
    grad_decay: float = 0.0
    rm_samples: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise InvalidInputError(f"unknown solver {self.solver!r}; expected one of {SOLVERS}")
        if self.mc_samples < 1 or self.iterations < 1:
            raise InvalidInputError("mc_samples and iterations must be >= 1")
        if not 0.5 < self.gamma < 1.0:
            raise InvalidInputError("gamma must lie in (1/2, 1)")
        if not self.c_gamma > 0:
            raise InvalidInputError("c_gamma must be positive")
        if self.omega < 0:
            raise InvalidInputError("omega must be >= 0")
        if not self.grad_step > 0 or self.grad_decay < 0:
            raise InvalidInputError("grad_step must be positive and grad_decay >= 0")
        if self.rm_samples is not None and self.rm_samples < 1:
            raise InvalidInputError("rm_samples must be >= 1")

    @property
    def rm_budget(self) -> int:
        return self.rm_samples if self.rm_samples is not None else self.mc_samples * self.iterations


def h_kernel(delta: ArrayLike, lam: ArrayLike, u: ArrayLike) -> float:
    """``(sum_i (delta_i - lam_i u_i^2)^2 + sum_{i != j} lam_i lam_j u_i^2 u_j^2)^(-1/2)``.

    The inner sum is clamped below at 1e-24.
    """
    delta = np.asarray(delta, dtype=float).reshape(-1)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    u2 = np.asarray(u, dtype=float).reshape(-1) ** 2
    return float(_h_batch(delta, lam, u2[None, :])[0])


def _h_batch(delta, lam, U2):
    A = lam * U2
    tot = A.sum(axis=1)
    s = ((delta - A) ** 2).sum(axis=1) + tot * tot - (A * A).sum(axis=1)
    return 1.0 / np.sqrt(np.maximum(s, H_GUARD))


@functools.lru_cache(maxsize=32)
def squared_sample(family: EmissionFamily, d: int, n: int, seed: int) -> NDArray[np.float64]:
    """Cached squared standardized draws; the same (family, d, n, seed) always reuses one sample."""
    U2 = sample_standardized(family, d, n, seed) ** 2
    U2.setflags(write=False)
    return U2


@functools.lru_cache(maxsize=8)
def rm_schedule(n: int, c_gamma: float, gamma: float, omega: float):
    """Step sizes ``c k^-gamma`` and averaging shares for a Robbins-Monro pass of length n.

    Iterate ``lambda_k`` (k = 0..n) carries weight ``log(k + 1)^omega``, so
    ``lambda_0`` counts only when ``omega == 0``.
    """
    k = np.arange(1, n + 1, dtype=float)
    steps = c_gamma * k ** (-gamma)
    w = np.log(k + 1.0) ** omega
    total = np.cumsum(w) + (1.0 if omega == 0 else 0.0)
    avg = w / total
    steps.setflags(write=False)
    avg.setflags(write=False)
    return steps, avg


def _fixpoint(delta, U2, T):
    lam = delta.copy()
    for t in range(T):
        h = _h_batch(delta, lam, U2)
        lam = delta * h.sum() / (U2 * h[:, None]).sum(axis=0)
        if not np.all(np.isfinite(lam)):
            raise NumericalFailureError(f"fix-point iterate became non-finite at iteration {t}", t)
    return lam


def _gradient(delta, U2, T, step, decay):
    lam = delta.copy()
    for t in range(T):
        h = _h_batch(delta, lam, U2)
        grad = ((lam * U2 - delta) * h[:, None]).mean(axis=0)
        lam = np.maximum(lam - step * (1.0 + t) ** (-decay) / h.mean() * grad, 0.0)
        if not np.all(np.isfinite(lam)):
            raise NumericalFailureError(f"gradient iterate became non-finite at iteration {t}", t)
    return lam


def recover_eigenvalues(
    delta: ArrayLike, family: EmissionFamily, cfg: RecoveryConfig = RecoveryConfig()
) -> NDArray[np.float64]:
    """Covariance eigenvalues ``lambda`` matching MCM eigenvalues ``delta``.

    All solvers start from ``lambda_0 = delta``, keep iterates nonnegative and
    are deterministic given ``cfg.seed``. The problem is solved on
    ``delta / max(delta)`` and rescaled, which leaves the fix-point solver
    unchanged and makes the step sizes of the other two scale-free.

    Raises
    ------
    NumericalFailureError
        If an iterate becomes non-finite; ``.iteration`` holds the index.
    """
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if not np.all(np.isfinite(delta)) or np.any(delta < 0):
        raise InvalidInputError("delta must be finite and nonnegative")
    scale = delta.max()
    if scale == 0.0:
        return np.zeros_like(delta)
    dn = delta / scale
    d = delta.shape[0]
    if cfg.solver == "robbins-monro":
        U2 = squared_sample(family, d, cfg.rm_budget, cfg.seed)
        steps, avg = rm_schedule(cfg.rm_budget, float(cfg.c_gamma), float(cfg.gamma), float(cfg.omega))
        lam, failed_at = _kernels.robbins_monro_loop(dn, dn.copy(), U2, steps, avg, H_GUARD)
        if failed_at >= 0:
            raise NumericalFailureError(
                f"Robbins-Monro iterate became non-finite at step {failed_at}", failed_at
            )
    else:
        U2 = squared_sample(family, d, cfg.mc_samples, cfg.seed)
        if cfg.solver == "fixpoint":
            lam = _fixpoint(dn, U2, cfg.iterations)
        else:
            lam = _gradient(dn, U2, cfg.iterations, cfg.grad_step, cfg.grad_decay)
    return np.maximum(lam, 0.0) * scale


def psi_u(V: ArrayLike, family: EmissionFamily, cfg: RecoveryConfig = RecoveryConfig()) -> NDArray[np.float64]:
    """Map an MCM to the covariance with the same eigenvectors.

    Negative eigenvalues of ``V`` are treated as zero, the recovered
    eigenvalues are recombined with ``V``'s eigenvectors, and the result is
    floored positive definite with :func:`~robmix.linalg.psd_project`.
    """
    values, vectors = sym_eigen(V)
    lam = recover_eigenvalues(np.maximum(values, 0.0), family, cfg)
    return psd_project(reconstruct(lam, vectors))


def forward_eigenvalues(
    lam: ArrayLike, family: EmissionFamily, cfg: RecoveryConfig = RecoveryConfig(), max_iter: int = 500
) -> NDArray[np.float64]:
    """MCM eigenvalues implied by covariance eigenvalues ``lam`` on the configured sample.

    Iterates ``delta <- lam * mean(U^2 h) / mean(h)`` to convergence.
    """
    lam = np.asarray(lam, dtype=float).reshape(-1)
    U2 = squared_sample(family, lam.shape[0], cfg.mc_samples, cfg.seed)
    delta = 0.5 * lam
    for _ in range(max_iter):
        h = _h_batch(delta, lam, U2)
        new = lam * (U2 * h[:, None]).sum(axis=0) / h.sum()
        if np.abs(new - delta).max() <= 1e-14 * max(1.0, lam.max()):
            return new
        delta = new
    return delta


@functools.lru_cache(maxsize=64)
def isotropic_mcm_factor(family: EmissionFamily, d: int, cfg: RecoveryConfig = RecoveryConfig()) -> float:
    """Scalar ``c`` such that the MCM of a law with covariance ``I_d`` is about ``c * I_d``."""
    return float(forward_eigenvalues(np.ones(d), family, cfg).mean())
