"""Robust EM-type fix-point algorithm for mixture models.

The E-step is the usual posterior computation. The M-step replaces each
component's weighted mean by its weighted geometric median and its weighted
covariance by the covariance rebuilt from its weighted median covariation
matrix. A naive mean/covariance M-step is available as a comparison baseline.
"""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .errors import DegenerateClusterError, FitFailureError, InvalidInputError
from .families import EmissionFamily, log_density
from .linalg import default_floor, psd_project, sym_eigen
from .location import (
    AsgdConfig,
    WeiszfeldConfig,
    check_points,
    weighted_coordinate_median,
    weiszfeld_median,
)
from .recovery import RecoveryConfig, isotropic_mcm_factor, psi_u
from .scatter import asgd_median_mcm, weiszfeld_mcm

logger = logging.getLogger(__name__)

METHODS = ("robust", "naive")
RESTART_CRITERIA = ("trimmed", "loglik")


@dataclass
class MixtureParams:
    """Mixture parameters: proportions, centers, MCMs and covariances.

    For naive fits ``mcm`` holds the covariance as well.
    """

    pi: NDArray[np.float64]
    centers: NDArray[np.float64]
    mcm: NDArray[np.float64]
    sigma: NDArray[np.float64]
    family: EmissionFamily = field(default_factory=EmissionFamily.gaussian)

    @property
    def K(self) -> int:
        return self.pi.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    def permuted(self, order) -> "MixtureParams":
        order = np.asarray(order)
        return MixtureParams(
            self.pi[order], self.centers[order], self.mcm[order], self.sigma[order], self.family
        )

    def to_dict(self) -> dict:
        return {
            "family": str(self.family),
            "K": self.K,
            "pi": self.pi.tolist(),
            "m": self.centers.tolist(),
            "V": self.mcm.tolist(),
            "Sigma": self.sigma.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MixtureParams":
        return cls(
            pi=np.array(doc["pi"], dtype=float),
            centers=np.array(doc["m"], dtype=float).reshape(doc["K"], -1),
            mcm=np.array(doc["V"], dtype=float),
            sigma=np.array(doc["Sigma"], dtype=float),
            family=EmissionFamily.parse(doc["family"]),
        )


Initializer = Callable[..., MixtureParams]


@dataclass(frozen=True)
class FitConfig:
    """Settings for :func:`fit` and :func:`select_k`.

    ``estimator`` picks the M-step location/scatter routine ("weiszfeld" or
    "asgd"). ``jobs > 1`` runs restarts (and the K sweep) in worker
    processes; results do not depend on it.

    ``restart_criterion`` decides which restart :func:`fit` keeps. "loglik"
    takes the best observed-data log-likelihood. "trimmed" (default) takes the
    best sum of the ``1 - trim`` largest pointwise log mixture densities, so a
    restart cannot win merely by spending a component on scattered outliers.
    The reported ``loglik``, BIC and ICL always use the full likelihood.

    Restarts are screened until the relative log-likelihood change is below
    ``loglik_tol``. The kept restart is then iterated further until the last
    sweep also moved ``pi`` and the centers by less than ``param_tol`` and
    every MCM by less than ``10 * param_tol`` (relative Frobenius); only then
    is the fit marked converged. The robust M-step does not increase the
    likelihood, so the likelihood alone can settle while the parameters
    still drift.
    """

    max_outer_iter: int = 200
    loglik_tol: float = 1e-6
    param_tol: float = 1e-5
    pi_floor: float = 1e-6
    restarts: int = 5
    seed: int = 0
    method: str = "robust"
    estimator: str = "weiszfeld"
    weiszfeld: WeiszfeldConfig = WeiszfeldConfig()
    asgd: AsgdConfig = AsgdConfig()
    recovery: RecoveryConfig = RecoveryConfig(solver="robbins-monro", rm_samples=50_000)
    jobs: int = 1
    restart_criterion: str = "trimmed"
    trim: float = 0.25

    def __post_init__(self):
        if self.max_outer_iter < 1 or self.restarts < 1 or self.jobs < 1:
            raise InvalidInputError("max_outer_iter, restarts and jobs must be >= 1")
        if not (self.loglik_tol > 0 and self.param_tol > 0):
            raise InvalidInputError("loglik_tol and param_tol must be positive")
        if not 0 < self.pi_floor < 1:
            raise InvalidInputError("pi_floor must lie in (0, 1)")
        if self.method not in METHODS:
            raise InvalidInputError(f"method must be one of {METHODS}")
        if self.estimator not in ("weiszfeld", "asgd"):
            raise InvalidInputError("estimator must be 'weiszfeld' or 'asgd'")
        if self.restart_criterion not in RESTART_CRITERIA:
            raise InvalidInputError(f"restart_criterion must be one of {RESTART_CRITERIA}")
        if not 0 <= self.trim < 1:
            raise InvalidInputError("trim must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FitResult:
    params: MixtureParams
    tau: NDArray[np.float64]
    loglik_trace: list[float]
    converged: bool
    n_iter: int
    loglik: float
    bic: float
    icl: float
    method: str = "robust"
    restart_logliks: list[float | None] = field(default_factory=list)
    n_underflow_rows: int = 0
    trimmed_loglik: float = float("nan")
    restart_scores: list[float | None] = field(default_factory=list)
    restart_index: int | None = None

    @property
    def K(self) -> int:
        return self.params.K

    def labels(self) -> NDArray[np.int64]:
        return np.argmax(self.tau, axis=1)

    def uncertainty(self) -> NDArray[np.float64]:
        return 1.0 - self.tau.max(axis=1)

    def to_json(self, config: FitConfig | None = None, seed: int | None = None) -> str:
        doc = self.params.to_dict()
        doc.update(
            loglik=self.loglik,
            bic=self.bic,
            icl=self.icl,
            method=self.method,
            converged=self.converged,
            n_iter=self.n_iter,
            config=None if config is None else config.to_dict(),
            seed=seed if seed is not None else (None if config is None else config.seed),
        )
        return json.dumps(doc, indent=1)


def load_model(text: str) -> tuple[MixtureParams, dict]:
    """Parse a model document written by :meth:`FitResult.to_json`."""
    doc = json.loads(text)
    return MixtureParams.from_dict(doc), doc


# ---------------------------------------------------------------- E-step


def _log_joint(X, params):
    """``log pi_k + log phi_k(X_i)`` as an (n, K) array."""
    out = np.empty((X.shape[0], params.K))
    for k in range(params.K):
        out[:, k] = np.log(params.pi[k]) + log_density(X, params.centers[k], params.sigma[k], params.family)
    return out


def _posterior(logp):
    row_max = logp.max(axis=1)
    bad = ~np.isfinite(row_max)
    lse = logsumexp(logp, axis=1)
    with np.errstate(invalid="ignore"):
        tau = np.exp(logp - lse[:, None])
    if np.any(bad):
        tau[bad] = 1.0 / logp.shape[1]
    return tau, lse, int(bad.sum())


def e_step(X: ArrayLike, params: MixtureParams) -> NDArray[np.float64]:
    """Posterior membership probabilities, computed in log space.

    Rows where every component density underflows get uniform weights.
    """
    X = np.asarray(X, dtype=float)
    tau, _, n_bad = _posterior(_log_joint(X, params))
    if n_bad:
        logger.warning("%d rows had no finite component density; assigned uniform weights", n_bad)
    return tau


def trimmed_sum(pointwise: ArrayLike, trim: float) -> float:
    """Sum of the ``ceil((1 - trim) n)`` largest entries."""
    v = np.sort(np.asarray(pointwise, dtype=float))
    keep = int(np.ceil((1.0 - trim) * v.shape[0]))
    return float(v[v.shape[0] - keep :].sum())


def log_likelihood(X: ArrayLike, params: MixtureParams) -> float:
    """Observed-data log-likelihood ``sum_i log sum_k pi_k phi_k(X_i)``."""
    X = np.asarray(X, dtype=float)
    return float(logsumexp(_log_joint(X, params), axis=1).sum())


# ---------------------------------------------------------------- M-step


def floor_proportions(pi: ArrayLike, floor: float) -> NDArray[np.float64]:
    """Project onto ``{pi : sum pi = 1, pi_k >= floor}`` by clamping and rescaling the rest."""
    pi = np.asarray(pi, dtype=float) / np.sum(pi)
    fixed = np.zeros(pi.shape, dtype=bool)
    while True:
        low = (pi < floor) & ~fixed
        if not low.any():
            return pi
        fixed |= low
        pi = pi.copy()
        pi[fixed] = floor
        free = ~fixed
        pi[free] *= (1.0 - floor * fixed.sum()) / pi[free].sum()


def _robust_component(X, w, k, cfg, family, m_prev=None, V_prev=None):
    if cfg.estimator == "weiszfeld":
        # warm start from the previous iterate; the fix points do not depend on it
        m = weiszfeld_median(X, w, cfg.weiszfeld, init=m_prev)
        V = weiszfeld_mcm(X, m, w, cfg.weiszfeld, init=V_prev).mcm
    else:
        # asgd steps are weighted by w; normalise so the largest weight is 1
        wn = w / w.max()
        m, est = asgd_median_mcm(X, wn, cfg.asgd, init_m=weighted_coordinate_median(X, w))
        V = est.mcm
    values, vectors = sym_eigen(V)
    if values[-1] <= 0:
        raise DegenerateClusterError(f"cluster {k}: MCM is not positive definite", cluster=k)
    sigma = psi_u(V, family, cfg.recovery)
    lam = sym_eigen(sigma).values
    if lam[-1] <= default_floor(lam) * (1 + 1e-9):
        raise DegenerateClusterError(f"cluster {k}: covariance collapsed to the floor", cluster=k)
    return m, V, sigma


def _naive_component(X, w, k):
    nk = w.sum()
    m = (w @ X) / nk
    Z = X - m
    S = (Z * w[:, None]).T @ Z / nk
    sigma = psd_project(0.5 * (S + S.T))
    lam = sym_eigen(sigma).values
    if lam[-1] <= default_floor(lam) * (1 + 1e-9):
        raise DegenerateClusterError(f"cluster {k}: covariance collapsed to the floor", cluster=k)
    return m, sigma, sigma


def m_step(X: ArrayLike, tau: ArrayLike, prev: MixtureParams, cfg: FitConfig = FitConfig()) -> MixtureParams:
    """Update proportions, centers, MCMs and covariances from responsibilities.

    ``pi_k`` is the mean of column k of ``tau`` projected on the floored simplex;
    ``m_k`` is the ``tau[:, k]``-weighted geometric median; ``V_k`` the
    weighted MCM around the new ``m_k``; ``Sigma_k = psi_u(V_k)``. With
    ``cfg.method == "naive"`` the weighted mean and covariance are used instead.

    Raises
    ------
    DegenerateClusterError
        When a component's total weight is below ``d + 1`` or its scatter
        estimate is singular.
    """
    X = np.asarray(X, dtype=float)
    tau = np.asarray(tau, dtype=float)
    n, d = X.shape
    K = tau.shape[1]
    nk = tau.sum(axis=0)
    for k in range(K):
        if nk[k] < d + 1:
            raise DegenerateClusterError(
                f"cluster {k}: effective weight {nk[k]:.3g} < d + 1", cluster=k, weight=float(nk[k])
            )
    pi = floor_proportions(nk / n, cfg.pi_floor)
    centers = np.empty((K, d))
    mcm = np.empty((K, d, d))
    sigma = np.empty((K, d, d))
    for k in range(K):
        if cfg.method == "naive":
            centers[k], mcm[k], sigma[k] = _naive_component(X, tau[:, k], k)
        else:
            centers[k], mcm[k], sigma[k] = _robust_component(
                X, tau[:, k], k, cfg, prev.family, prev.centers[k], prev.mcm[k]
            )
    return MixtureParams(pi, centers, mcm, sigma, prev.family)


# ---------------------------------------------------------------- criteria


def n_free_parameters(K: int, d: int) -> int:
    """Independent parameters of a K-component full-covariance mixture in dimension d."""
    return (K - 1) + K * d + K * d * (d + 1) // 2


def information_criteria(loglik: float, tau: ArrayLike, d: int) -> tuple[float, float]:
    """BIC and ICL in the larger-is-better convention.

    ``BIC = L - log(n) D_K / 2`` and ``ICL = BIC + sum tau log tau``
    (with ``0 log 0 = 0``); ``n`` and ``K`` are read from ``tau``.
    """
    tau = np.asarray(tau, dtype=float)
    n, K = tau.shape
    bic = loglik - np.log(n) * n_free_parameters(K, d) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(tau > 0, tau * np.log(tau), 0.0).sum()
    return float(bic), float(bic + ent)


# ---------------------------------------------------------------- fitting


def init_random(
    X: ArrayLike,
    K: int,
    seed=None,
    family: EmissionFamily = EmissionFamily.gaussian(),
    recovery: RecoveryConfig = RecoveryConfig(solver="robbins-monro", rm_samples=50_000),
) -> MixtureParams:
    """K distinct rows as centers, equal proportions and identity covariances.

    The MCMs are set to ``c * I`` where ``c`` is the isotropic MCM factor of
    the family, so that ``psi_u(V_k)`` is close to ``I``.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if K < 1 or n < K:
        raise InvalidInputError(f"need 1 <= K <= n, got K={K}, n={n}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=K, replace=False)
    c = isotropic_mcm_factor(family, d, recovery)
    return MixtureParams(
        pi=np.full(K, 1.0 / K),
        centers=X[idx].copy(),
        mcm=np.tile(c * np.eye(d), (K, 1, 1)),
        sigma=np.tile(np.eye(d), (K, 1, 1)),
        family=family,
    )


def restart_seeds(seed: int, K: int, restarts: int) -> list[int]:
    children = np.random.SeedSequence([int(seed), int(K)]).spawn(restarts)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _rel_change(new, old) -> float:
    return float(np.linalg.norm(new - old) / max(np.linalg.norm(old), 1e-300))


def parameter_change(new: MixtureParams, old: MixtureParams) -> tuple[float, float]:
    """Relative moves ``(max over pi and centers, max over the MCMs)`` between two iterates."""
    loc = max(_rel_change(new.pi, old.pi), _rel_change(new.centers, old.centers))
    scat = max(_rel_change(new.mcm[k], old.mcm[k]) for k in range(old.K))
    return loc, scat


def run_em(X: NDArray, start: MixtureParams, cfg: FitConfig, check_params: bool = True) -> FitResult:
    """Alternate E and M steps from ``start`` until the likelihood settles.

    With ``check_params`` the parameters must settle too (see :class:`FitConfig`).
    At most ``cfg.max_outer_iter`` sweeps are run.
    """
    params = start
    trace: list[float] = []
    converged = False
    n_iter = 0
    if params.K == 1:
        params = m_step(X, np.ones((X.shape[0], 1)), params, cfg)
        trace.append(log_likelihood(X, params))
        converged, n_iter = True, 1
    else:
        prev_ll = None
        tau, _, _ = _posterior(_log_joint(X, params))
        for n_iter in range(1, cfg.max_outer_iter + 1):
            old, params = params, m_step(X, tau, params, cfg)
            # one density evaluation serves this likelihood and the next E-step
            tau, lse, _ = _posterior(_log_joint(X, params))
            ll = float(lse.sum())
            trace.append(ll)
            if not np.isfinite(ll):
                raise DegenerateClusterError("log-likelihood is not finite")
            if prev_ll is not None and abs(ll - prev_ll) / max(1.0, abs(ll)) < cfg.loglik_tol:
                loc, scat = parameter_change(params, old) if check_params else (0.0, 0.0)
                if loc < cfg.param_tol and scat < 10 * cfg.param_tol:
                    converged = True
                    break
            prev_ll = ll
    tau, lse, n_bad = _posterior(_log_joint(X, params))
    ll = float(lse.sum())
    bic, icl = information_criteria(ll, tau, X.shape[1])
    return FitResult(
        params=params,
        tau=tau,
        loglik_trace=trace,
        converged=converged,
        n_iter=n_iter,
        loglik=ll,
        bic=bic,
        icl=icl,
        method=cfg.method,
        n_underflow_rows=n_bad,
        trimmed_loglik=trimmed_sum(lse, cfg.trim),
    )


def _one_restart(args):
    X, K, family, cfg, seed, initializer = args
    init = initializer or init_random
    try:
        start = init(X, K, seed, family, cfg.recovery)
        return run_em(X, start, cfg, check_params=False)
    except DegenerateClusterError as exc:
        logger.debug("restart with seed %d degenerate: %s", seed, exc)
        return None


def fit(
    X: ArrayLike,
    K: int,
    family: EmissionFamily = EmissionFamily.gaussian(),
    cfg: FitConfig = FitConfig(),
    initializer: Initializer | None = None,
) -> FitResult:
    """Fit a K-component mixture over several random restarts.

    The kept restart maximises ``cfg.restart_criterion`` (see
    :class:`FitConfig`); ties go to the earlier restart. Restarts are run
    to the likelihood tolerance only, then the kept one is refined until its
    parameters settle.

    ``initializer(X, K, seed, family, recovery_cfg)`` builds starting
    parameters; random initialization by default. Each restart gets its own
    seed derived from ``(cfg.seed, K)``.

    Raises
    ------
    FitFailureError
        If every restart ends degenerate.
    """
    X, _ = check_points(X)
    n, d = X.shape
    if K < 1:
        raise InvalidInputError("K must be >= 1")
    if n < K * (d + 1):
        warnings.warn(f"n={n} is small for K={K} components in dimension {d}", stacklevel=2)
    restarts = 1 if K == 1 else cfg.restarts
    jobs = [(X, K, family, cfg, s, initializer) for s in restart_seeds(cfg.seed, K, restarts)]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_one_restart, jobs))
    else:
        results = [_one_restart(j) for j in jobs]
    attr = "loglik" if cfg.restart_criterion == "loglik" else "trimmed_loglik"
    best, index = None, None
    for i, r in enumerate(results):
        if r is not None and (best is None or getattr(r, attr) > getattr(best, attr)):
            best, index = r, i
    if best is None:
        raise FitFailureError(f"all {restarts} restarts degenerate for K={K}")
    polished = best
    if K > 1:
        try:
            polished = run_em(X, best.params, cfg)
            polished.loglik_trace = best.loglik_trace + polished.loglik_trace
            polished.n_iter += best.n_iter
        except DegenerateClusterError as exc:
            # keep the screened fit, which never passed the parameter check
            logger.warning("K=%d: refining the kept restart degenerated (%s)", K, exc)
            best.converged = False
    polished.restart_index = index
    polished.restart_logliks = [None if r is None else r.loglik for r in results]
    polished.restart_scores = [None if r is None else getattr(r, attr) for r in results]
    return polished


def _fit_or_error(args):
    X, K, family, cfg, initializer = args
    try:
        return fit(X, K, family, replace(cfg, jobs=1), initializer)
    except FitFailureError as exc:
        return exc


def select_k(
    X: ArrayLike,
    k_range,
    criterion: str = "bic",
    family: EmissionFamily = EmissionFamily.gaussian(),
    cfg: FitConfig = FitConfig(),
    initializer: Initializer | None = None,
) -> tuple[int, dict]:
    """Fit every K in ``k_range`` and return the criterion maximiser.

    Failed Ks are stored in the result dict as their ``FitFailureError``.
    Ties go to the smaller K.
    """
    criterion = criterion.lower()
    if criterion not in ("bic", "icl"):
        raise InvalidInputError("criterion must be 'bic' or 'icl'")
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise InvalidInputError("k_range is empty")
    X, _ = check_points(X)
    jobs = [(X, k, family, cfg, initializer) for k in ks]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outs = list(pool.map(_fit_or_error, jobs))
    else:
        outs = [_fit_or_error(j) for j in jobs]
    results = dict(zip(ks, outs))
    best_k, best_val = None, -np.inf
    for k in ks:
        r = results[k]
        if isinstance(r, FitResult):
            val = getattr(r, criterion)
            if val > best_val:
                best_k, best_val = k, val
    if best_k is None:
        raise FitFailureError(f"every K in {ks} failed")
    return best_k, results
