"""Synthetic mixture data with per-cluster contamination.

Presets
-------
``paper3``: three 5-dimensional clusters with centers ``MU[0..2]`` and
covariances ``SIGMA1..SIGMA3``. ``sigma0``: a single centred cluster with
covariance ``SIGMA0``, used for the variance-estimation study.

Contamination scenarios replace ``round(delta * n_k)`` members of every
cluster by draws from

* ``a``: uniform on ``[-20, 20]^d``;
* ``b`` / ``d``: Student, location 0, identity scale, 1 / 2 degrees of freedom;
* ``c`` / ``e``: the same laws centred at the cluster's own center.

Cluster labels are 1-based.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidInputError
from .families import EmissionFamily, sample_standardized

MU = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0, 3.0, 3.0, 3.0, -3.0],
        [-3.0, -3.0, -3.0, -3.0, -3.0],
    ]
)

SIGMA1 = np.array(
    [
        [2, 0.43, 0.41, 0.15, 0.68],
        [0.43, 2, 0.7, 0.49, 0.89],
        [0.41, 0.7, 2, 0.17, 0.42],
        [0.15, 0.49, 0.17, 2, 0.43],
        [0.68, 0.89, 0.42, 0.43, 2],
    ]
)

SIGMA2 = np.array(
    [
        [1, 0.46, 0.17, 0.04, 1.06],
        [0.46, 2, 0.61, 0.18, 1.22],
        [0.17, 0.61, 3, 0.7, 0.65],
        [0.04, 0.18, 0.7, 4, 0.16],
        [1.06, 1.22, 0.65, 0.16, 5],
    ]
)

SIGMA3 = np.array(
    [
        [1, 0.6, 0.11, 0.03, 0.26],
        [0.6, 0.5, 0.09, 0.02, 0.17],
        [0.11, 0.09, 0.33, 0.03, 0.04],
        [0.03, 0.02, 0.03, 0.25, 0.01],
        [0.26, 0.17, 0.04, 0.01, 0.2],
    ]
)

SIGMA0 = np.array(
    [
        [4, 0.86, 0.83, 0.29, 1.35],
        [0.86, 4, 1.4, 0.97, 1.79],
        [0.83, 1.4, 4, 0.35, 0.84],
        [0.29, 0.97, 0.35, 4, 0.86],
        [1.35, 1.79, 0.84, 0.86, 4],
    ]
)

DEFAULT_NU = 3
SCENARIOS = ("a", "b", "c", "d", "e")
UNIFORM_HALF_WIDTH = 20.0

PRESETS = {
    "paper3": (MU, np.stack([SIGMA1, SIGMA2, SIGMA3])),
    "sigma0": (np.zeros((1, 5)), SIGMA0[None]),
}


@dataclass
class Dataset:
    X: NDArray[np.float64]
    labels: NDArray[np.int64] | None = None
    outliers: NDArray[np.bool_] | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ScenarioSpec:
    """A full simulation design: ground truth, family and contamination."""

    nk: tuple[int, ...]
    centers: NDArray[np.float64]
    sigmas: NDArray[np.float64]
    family: EmissionFamily = EmissionFamily.gaussian()
    scenario: str = "a"
    delta: float = 0.0

    def __post_init__(self):
        check_contamination(self.scenario, self.delta)
        if len(self.nk) != len(self.centers) or len(self.nk) != len(self.sigmas):
            raise InvalidInputError("nk, centers and sigmas must have one entry per cluster")
        if any(int(c) < 1 for c in self.nk):
            raise InvalidInputError("every cluster needs at least one observation")

    @classmethod
    def from_preset(cls, name: str, nk=None, **kw) -> "ScenarioSpec":
        try:
            centers, sigmas = PRESETS[name]
        except KeyError:
            raise InvalidInputError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None
        if nk is None:
            nk = (500,) * len(centers)
        return cls(nk=tuple(int(c) for c in nk), centers=centers, sigmas=sigmas, **kw)


def check_contamination(scenario: str, delta: float):
    if scenario not in SCENARIOS:
        raise InvalidInputError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    if not 0.0 <= delta <= 0.5:
        raise InvalidInputError("delta must lie in [0, 0.5]")


def n_contaminated(delta: float, nk: int) -> int:
    """``round(delta * nk)`` with ties rounded up."""
    return int(math.floor(delta * nk + 0.5))


def _seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def generate_mixture(
    nk: ArrayLike,
    centers: ArrayLike,
    sigmas: ArrayLike,
    family: EmissionFamily = EmissionFamily.gaussian(),
    seed=None,
) -> Dataset:
    """Draw exactly ``nk[k]`` rows from cluster k, clusters stacked in order.

    Each cluster uses its own generator spawned from ``seed``.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    sigmas = np.asarray(sigmas, dtype=float)
    nk = [int(c) for c in np.atleast_1d(nk)]
    K, d = centers.shape
    if len(nk) != K or sigmas.shape != (K, d, d):
        raise InvalidInputError("nk, centers and sigmas disagree on K or d")
    streams = _seed_sequence(seed).spawn(K)
    blocks, labels = [], []
    for k in range(K):
        rng = np.random.default_rng(streams[k])
        L = np.linalg.cholesky(sigmas[k])
        U = sample_standardized(family, d, nk[k], rng)
        blocks.append(centers[k] + U @ L.T)
        labels.append(np.full(nk[k], k + 1))
    return Dataset(np.vstack(blocks), np.concatenate(labels), np.zeros(sum(nk), dtype=bool))


def _student(rng, loc, n, d, df):
    Z = rng.standard_normal((n, d))
    return loc + Z / np.sqrt(rng.chisquare(df, size=n) / df)[:, None]


def contaminate(
    X: ArrayLike,
    labels: ArrayLike,
    scenario: str,
    delta: float,
    seed=None,
    centers: ArrayLike | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Replace a fraction ``delta`` of each cluster's rows by outliers.

    ``centers`` (one row per label, in sorted label order) is required for
    scenarios ``c`` and ``e``. Labels are left unchanged.

    Returns
    -------
    X_out : ndarray
    flags : ndarray of bool, True on replaced rows
    """
    check_contamination(scenario, delta)
    X = np.array(X, dtype=float)
    labels = np.asarray(labels)
    n, d = X.shape
    flags = np.zeros(n, dtype=bool)
    uniq = np.unique(labels)
    if scenario in ("c", "e"):
        if centers is None:
            raise InvalidInputError(f"scenario {scenario!r} needs the cluster centers")
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        if centers.shape != (len(uniq), d):
            raise InvalidInputError("centers must have one row per cluster label")
    streams = _seed_sequence(seed).spawn(len(uniq))
    for j, lab in enumerate(uniq):
        rng = np.random.default_rng(streams[j])
        members = np.flatnonzero(labels == lab)
        m = n_contaminated(delta, len(members))
        if m == 0:
            continue
        rows = np.sort(rng.choice(members, size=m, replace=False))
        if scenario == "a":
            X[rows] = rng.uniform(-UNIFORM_HALF_WIDTH, UNIFORM_HALF_WIDTH, size=(m, d))
        else:
            df = 1 if scenario in ("b", "c") else 2
            loc = centers[j] if scenario in ("c", "e") else np.zeros(d)
            X[rows] = _student(rng, loc, m, d, df)
        flags[rows] = True
    return X, flags


def simulate(spec: ScenarioSpec, seed=None) -> Dataset:
    """Generate ``spec``'s mixture and contaminate it, with independent child seeds."""
    gen_seed, cont_seed = _seed_sequence(seed).spawn(2)
    data = generate_mixture(spec.nk, spec.centers, spec.sigmas, spec.family, gen_seed)
    X, flags = contaminate(data.X, data.labels, spec.scenario, spec.delta, cont_seed, spec.centers)
    return Dataset(X, data.labels, flags)


# ---------------------------------------------------------------- CSV


def format_float(x: float) -> str:
    return f"{x:.17g}"


def dataset_to_csv(data: Dataset) -> str:
    d = data.d
    cols = [f"x{j + 1}" for j in range(d)]
    if data.labels is not None:
        cols.append("label")
    if data.outliers is not None:
        cols.append("outlier")
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for i in range(data.n):
        row = [format_float(v) for v in data.X[i]]
        if data.labels is not None:
            row.append(str(int(data.labels[i])))
        if data.outliers is not None:
            row.append(str(int(data.outliers[i])))
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def write_dataset(data: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dataset_to_csv(data))


def read_dataset(path) -> Dataset:
    """Read a CSV with ``x1..xd`` columns and optional ``label`` / ``outlier`` columns."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        raw = np.loadtxt(fh, delimiter=",", ndmin=2) if header != [""] else None
    if raw is None or raw.size == 0:
        raise InvalidInputError(f"{path}: no data rows")
    if raw.shape[1] != len(header):
        raise InvalidInputError(f"{path}: header has {len(header)} columns, rows have {raw.shape[1]}")
    xcols = [j for j, h in enumerate(header) if h not in ("label", "outlier")]
    labels = raw[:, header.index("label")].astype(np.int64) if "label" in header else None
    outliers = raw[:, header.index("outlier")].astype(bool) if "outlier" in header else None
    return Dataset(raw[:, xcols], labels, outliers)
