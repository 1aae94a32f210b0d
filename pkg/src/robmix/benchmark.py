"""Grid runner for robust-versus-naive comparisons on simulated data.

A grid file is an INI document with a single ``[grid]`` section::

    [grid]
    task = cluster          ; or "variance"
    preset = paper3
    family = gaussian
    scenarios = a
    deltas = 0, 0.05
    seeds = 0:3             ; "a:b" is range(a, b); a comma list also works
    methods = robust, naive

Optional keys: ``nk`` (comma list), ``k`` or ``k_range`` (``lo:hi``
inclusive) with ``criterion``, ``restarts``, ``estimator``, ``solver``.
Cells are the product scenarios x deltas x seeds x methods, in that order.

Task ``cluster`` fits the mixture and reports ARI and matched MSEs. Task
``variance`` treats the data as a single sample and estimates its covariance,
either robustly (median, MCM, then eigenvalue recovery) or by the empirical
covariance. For that task ``mse_mu`` is ``||mu - m||^2 / d`` and
``mse_sigma`` is the squared Frobenius error ``||Sigma - Sigma_hat||_F^2``.
"""

from __future__ import annotations

import configparser
import itertools
from types import SimpleNamespace
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import FitFailureError, InvalidInputError, NumericalFailureError
from .evaluation import RESULT_COLUMNS, EvalReport, evaluate_fit, result_row, sq_frobenius_error
from .families import EmissionFamily
from .location import AsgdConfig, WeiszfeldConfig, weiszfeld_median
from .mixture import METHODS, FitConfig, fit, select_k
from .recovery import SOLVERS, RecoveryConfig, psi_u
from .scatter import asgd_median_mcm, weiszfeld_mcm
from .simulation import PRESETS, SCENARIOS, ScenarioSpec, simulate

TASKS = ("cluster", "variance")
KNOWN_KEYS = {
    "task", "preset", "family", "scenarios", "deltas", "seeds", "methods",
    "nk", "k", "k_range", "criterion", "restarts", "estimator", "solver",
}


@dataclass(frozen=True)
class Grid:
    task: str
    preset: str
    family: EmissionFamily
    scenarios: tuple[str, ...]
    deltas: tuple[float, ...]
    seeds: tuple[int, ...]
    methods: tuple[str, ...]
    nk: tuple[int, ...] | None = None
    k: int | None = None
    k_range: tuple[int, int] | None = None
    criterion: str = "bic"
    restarts: int = 5
    estimator: str = "weiszfeld"
    solver: str = "fixpoint"

    def cells(self):
        return list(itertools.product(self.scenarios, self.deltas, self.seeds, self.methods))


def _split(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_range(text, inclusive):
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(f"expected lo:hi, got {text!r}")
    lo, hi = int(lo), int(hi)
    return range(lo, hi + 1 if inclusive else hi)


def _k_range(text):
    r = _int_range(text, True)
    return (r.start, r.stop - 1)


def parse_grid(text: str) -> Grid:
    """Parse and validate a grid document; every error is an :class:`InvalidInputError`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InvalidInputError(f"malformed grid file: {exc}") from None
    if "grid" not in cp:
        raise InvalidInputError("grid file needs a [grid] section")
    sec = cp["grid"]
    unknown = set(sec) - KNOWN_KEYS
    if unknown:
        raise InvalidInputError(f"unknown grid keys: {sorted(unknown)}")
    try:
        task = sec.get("task", "cluster")
        seeds_text = sec.get("seeds", "0")
        seeds = _int_range(seeds_text, False) if ":" in seeds_text else [int(s) for s in _split(seeds_text)]
        grid = Grid(
            task=task,
            preset=sec.get("preset", "paper3" if task == "cluster" else "sigma0"),
            family=EmissionFamily.parse(sec.get("family", "gaussian")),
            scenarios=tuple(_split(sec.get("scenarios", "a"))),
            deltas=tuple(float(x) for x in _split(sec.get("deltas", "0"))),
            seeds=tuple(seeds),
            methods=tuple(_split(sec.get("methods", "robust, naive"))),
            nk=tuple(int(x) for x in _split(sec["nk"])) if "nk" in sec else None,
            k=int(sec["k"]) if "k" in sec else None,
            k_range=_k_range(sec["k_range"]) if "k_range" in sec else None,
            criterion=sec.get("criterion", "bic").lower(),
            restarts=int(sec.get("restarts", "5")),
            estimator=sec.get("estimator", "weiszfeld"),
            solver=sec.get("solver", "fixpoint"),
        )
    except (ValueError, IndexError) as exc:
        raise InvalidInputError(f"malformed grid file: {exc}") from None
    _check_grid(grid)
    return grid


def _check_grid(g: Grid):
    if g.task not in TASKS:
        raise InvalidInputError(f"task must be one of {TASKS}")
    if g.preset not in PRESETS:
        raise InvalidInputError(f"unknown preset {g.preset!r}")
    if not (g.scenarios and g.deltas and g.seeds and g.methods):
        raise InvalidInputError("scenarios, deltas, seeds and methods must be non-empty")
    for s in g.scenarios:
        if s not in SCENARIOS:
            raise InvalidInputError(f"unknown scenario {s!r}")
    for d in g.deltas:
        if not 0 <= d <= 0.5:
            raise InvalidInputError("deltas must lie in [0, 0.5]")
    for m in g.methods:
        if m not in METHODS:
            raise InvalidInputError(f"unknown method {m!r}")
    K_true = PRESETS[g.preset][0].shape[0]
    if g.task == "variance" and K_true != 1:
        raise InvalidInputError("the variance task needs a single-cluster preset")
    if g.nk is not None and (len(g.nk) != K_true or min(g.nk) < 1):
        raise InvalidInputError(f"nk needs {K_true} positive counts for preset {g.preset!r}")
    if g.k is not None and g.k_range is not None:
        raise InvalidInputError("give k or k_range, not both")
    if g.k is not None and g.k < 1:
        raise InvalidInputError("k must be >= 1")
    if g.k_range is not None and not 1 <= g.k_range[0] <= g.k_range[1]:
        raise InvalidInputError("k_range must be lo:hi with 1 <= lo <= hi")
    if g.criterion not in ("bic", "icl"):
        raise InvalidInputError("criterion must be bic or icl")
    if g.restarts < 1:
        raise InvalidInputError("restarts must be >= 1")
    if g.estimator not in ("weiszfeld", "asgd"):
        raise InvalidInputError("estimator must be weiszfeld or asgd")
    if g.solver not in SOLVERS:
        raise InvalidInputError(f"solver must be one of {SOLVERS}")


def robust_covariance(X, family=EmissionFamily.gaussian(), estimator="weiszfeld", recovery=RecoveryConfig()):
    """Median, MCM and covariance ``psi_u(MCM)`` of a single sample."""
    if estimator == "weiszfeld":
        m = weiszfeld_median(X, cfg=WeiszfeldConfig())
        V = weiszfeld_mcm(X, m).mcm
    else:
        m, est = asgd_median_mcm(X, cfg=AsgdConfig())
        V = est.mcm
    return m, V, psi_u(V, family, recovery)


def _variance_cell(g: Grid, spec: ScenarioSpec, data, method: str) -> EvalReport:
    mu, Sigma = spec.centers[0], spec.sigmas[0]
    if method == "naive":
        m = data.X.mean(axis=0)
        S = np.cov(data.X, rowvar=False)
    else:
        m, _, S = robust_covariance(data.X, g.family, g.estimator, RecoveryConfig(solver=g.solver))
    d = data.d
    return EvalReport(
        ari=None,
        mse_mu=float(((m - mu) ** 2).sum() / d),
        mse_sigma=sq_frobenius_error(Sigma, S),
        matching=None,
        khat=1,
        converged=True,
    )


def run_cell(g: Grid, cell) -> str:
    """Result row for one (scenario, delta, seed, method) cell; failures give empty metrics."""
    scenario, delta, seed, method = cell
    spec = ScenarioSpec.from_preset(g.preset, nk=g.nk, family=g.family, scenario=scenario, delta=delta)
    data = simulate(spec, seed)
    try:
        if g.task == "variance":
            rep = _variance_cell(g, spec, data, method)
        else:
            cfg = FitConfig(seed=seed, method=method, restarts=g.restarts, estimator=g.estimator)
            if g.k_range is not None:
                best_k, fits = select_k(data.X, range(g.k_range[0], g.k_range[1] + 1), g.criterion, g.family, cfg)
                res = fits[best_k]
            else:
                res = fit(data.X, g.k or len(spec.nk), g.family, cfg)
            truth = SimpleNamespace(centers=spec.centers, sigma=spec.sigmas)
            rep = evaluate_fit(truth, data.labels, res)
    except (FitFailureError, NumericalFailureError):
        rep = EvalReport(None, None, None, None, None, False)
    return result_row(method, scenario, delta, seed, rep)


def _run_cell_args(args):
    return run_cell(*args)


def run_grid(g: Grid, jobs: int = 1) -> str:
    """Results CSV text: header plus one row per cell, always in grid order."""
    cells = g.cells()
    args = [(g, c) for c in cells]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell_args, args))
    else:
        rows = [run_cell(*a) for a in args]
    return ",".join(RESULT_COLUMNS) + "\n" + "".join(r + "\n" for r in rows)
