"""Emission families: standardized samplers and log-densities.

Every family is parametrized by its mean ``m`` and its *covariance* ``Sigma``:

* Gaussian: ``N(m, Sigma)``;
* Student(nu), nu >= 3: multivariate t with scale ``S = (nu - 2) / nu * Sigma``;
* Laplace: symmetric multivariate Laplace ``m + sqrt(W) Sigma^{1/2} N``,
  ``W ~ Exp(1)``.

The standardized law ``U = Sigma^{-1/2}(X - m)`` therefore has identity
covariance for every family.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from .errors import InvalidInputError

KINDS = ("gaussian", "student", "laplace")


@dataclass(frozen=True)
class EmissionFamily:
    kind: str = "gaussian"
    nu: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown family {self.kind!r}; expected one of {KINDS}")
        if self.kind == "student":
            if self.nu is None or int(self.nu) != self.nu or self.nu < 3:
                raise InvalidInputError("Student family needs an integer nu >= 3")
        elif self.nu is not None:
            raise InvalidInputError(f"{self.kind} family takes no degrees of freedom")

    @classmethod
    def gaussian(cls):
        return cls("gaussian")

    @classmethod
    def student(cls, nu=3):
        return cls("student", nu)

    @classmethod
    def laplace(cls):
        return cls("laplace")

    @classmethod
    def parse(cls, text: str) -> "EmissionFamily":
        """Parse ``gaussian``, ``laplace``, ``student`` or ``student:NU``."""
        name, _, nu = text.strip().lower().partition(":")
        if name == "student":
            try:
                return cls.student(int(nu) if nu else 3)
            except ValueError:
                raise InvalidInputError(f"bad degrees of freedom in {text!r}") from None
        if nu:
            raise InvalidInputError(f"{name} family takes no degrees of freedom")
        return cls(name)

    def __str__(self):
        return f"student:{self.nu}" if self.kind == "student" else self.kind


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_standardized(family: EmissionFamily, d: int, n: int, seed=None) -> NDArray[np.float64]:
    """Draw ``n`` i.i.d. rows of the zero-mean, identity-covariance law of ``family``.

    ``seed`` may be an integer or a ``numpy.random.Generator``.
    """
    if d < 1 or n < 1:
        raise InvalidInputError("d and n must be >= 1")
    rng = _rng(seed)
    Z = rng.standard_normal((n, d))
    if family.kind == "gaussian":
        return Z
    if family.kind == "student":
        nu = family.nu
        return Z * np.sqrt((nu - 2) / rng.chisquare(nu, size=n))[:, None]
    return Z * np.sqrt(rng.exponential(1.0, size=n))[:, None]


def _cholesky(Sigma):
    S = np.asarray(Sigma, dtype=float)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise InvalidInputError("Sigma is not positive definite") from None


def mahalanobis_sq(X: ArrayLike, m: ArrayLike, Sigma: ArrayLike):
    """Squared Mahalanobis distances of the rows of X, and ``log det Sigma``."""
    L = _cholesky(Sigma)
    Z = np.linalg.solve(L, (np.atleast_2d(X) - m).T)
    return (Z * Z).sum(axis=0), 2.0 * np.log(np.diag(L)).sum()


def log_density(X: ArrayLike, m: ArrayLike, Sigma: ArrayLike, family: EmissionFamily):
    """Row-wise log-density of ``family`` with mean ``m`` and covariance ``Sigma``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = X.shape[1]
    q, logdet = mahalanobis_sq(X, m, Sigma)
    if family.kind == "gaussian":
        return -0.5 * (d * np.log(2 * np.pi) + logdet + q)
    if family.kind == "student":
        nu = family.nu
        # q is measured in Sigma; the t scale matrix is (nu - 2) / nu * Sigma
        logdet_s = logdet + d * np.log((nu - 2) / nu)
        q_s = q * nu / (nu - 2)
        return (
            special.gammaln((nu + d) / 2)
            - special.gammaln(nu / 2)
            - 0.5 * d * np.log(nu * np.pi)
            - 0.5 * logdet_s
            - 0.5 * (nu + d) * np.log1p(q_s / nu)
        )
    order = 1.0 - d / 2.0
    q = np.maximum(q, 1e-300)
    z = np.sqrt(2.0 * q)
    return (
        np.log(2.0)
        - 0.5 * d * np.log(2 * np.pi)
        - 0.5 * logdet
        + 0.5 * order * np.log(q / 2.0)
        + np.log(special.kve(order, z))
        - z
    )


def emission_density(x: ArrayLike, m: ArrayLike, Sigma: ArrayLike, family: EmissionFamily) -> float:
    return float(np.exp(log_density(np.atleast_2d(x), m, Sigma, family))[0])
