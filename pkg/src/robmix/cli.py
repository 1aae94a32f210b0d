"""Command-line interface: ``robmix generate | fit | select | benchmark``.

Every command writes its outputs plus a ``<output>.manifest.json`` record
of the command, its settings, seed, library version, paths and wall-clock
duration. Outputs depend only on flags, inputs and seed.

Exit codes: 0 success, 2 usage error, 3 fit failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from importlib import metadata

import numpy as np

from .benchmark import parse_grid, run_grid
from .errors import FitFailureError, InvalidInputError, NumericalFailureError
from .evaluation import adjusted_rand_index
from .families import EmissionFamily
from .mixture import FitConfig, FitResult, fit, select_k
from .simulation import PRESETS, SCENARIOS, ScenarioSpec, format_float, read_dataset, simulate, write_dataset

EXIT_OK, EXIT_USAGE, EXIT_FIT, EXIT_IO = 0, 2, 3, 4
SEED_ENV = "ROBMIX_SEED"

logger = logging.getLogger("robmix")


class UsageError(Exception):
    pass


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_manifest(out_path, command, settings, seed, inputs, outputs, started):
    doc = {
        "command": command,
        "settings": settings,
        "seed": seed,
        "version": _version(),
        "inputs": inputs,
        "outputs": outputs,
        "duration_s": time.perf_counter() - started,
    }
    _write_text(out_path + ".manifest.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _int_list(text):
    try:
        vals = [int(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None
    if any(v < 1 for v in vals):
        raise UsageError("counts must be positive")
    return tuple(vals)


def _k_range(text):
    lo, sep, hi = text.partition(":")
    try:
        lo, hi = int(lo), int(hi) if sep else int(lo)
    except ValueError:
        raise UsageError(f"--k-range expects lo:hi, got {text!r}") from None
    if not 1 <= lo <= hi:
        raise UsageError("--k-range needs 1 <= lo <= hi")
    return list(range(lo, hi + 1))


def _family(text):
    try:
        return EmissionFamily.parse(text)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------- generate


def cmd_generate(args) -> int:
    started = time.perf_counter()
    seed = args.seed if args.seed is not None else _default_seed()
    family = _family(args.family)
    if args.mu_file:
        try:
            centers = np.loadtxt(args.mu_file, delimiter=",", ndmin=2)
            sigmas = (
                np.loadtxt(args.sigma_file, delimiter=",", ndmin=2).reshape(centers.shape[0], centers.shape[1], -1)
                if args.sigma_file
                else np.tile(np.eye(centers.shape[1]), (centers.shape[0], 1, 1))
            )
        except OSError as exc:
            raise OSError(f"cannot read centers/covariances: {exc}") from exc
        except ValueError as exc:
            raise UsageError(f"bad --mu-file/--sigma-file: {exc}") from None
        nk = _int_list(args.nk) if args.nk else (500,) * centers.shape[0]
        try:
            spec = ScenarioSpec(nk, centers, sigmas, family, args.scenario, args.delta)
        except InvalidInputError as exc:
            raise UsageError(str(exc)) from None
        source = {"mu_file": args.mu_file, "sigma_file": args.sigma_file}
    else:
        nk = _int_list(args.nk) if args.nk else None
        try:
            spec = ScenarioSpec.from_preset(args.preset, nk, family=family, scenario=args.scenario, delta=args.delta)
        except InvalidInputError as exc:
            raise UsageError(str(exc)) from None
        source = {"preset": args.preset}
    data = simulate(spec, seed)
    write_dataset(data, args.out)
    settings = dict(source, family=str(family), scenario=args.scenario, delta=args.delta, nk=list(spec.nk))
    _write_manifest(args.out, "generate", settings, seed, [], [args.out], started)
    return EXIT_OK


# ---------------------------------------------------------------- fit / select


def _assignment_csv(res: FitResult) -> str:
    lines = ["row,cluster,uncertainty"]
    for i, (c, u) in enumerate(zip(res.labels(), res.uncertainty())):
        lines.append(f"{i + 1},{int(c) + 1},{format_float(float(u))}")
    return "\n".join(lines) + "\n"


def _criteria_csv(results: dict) -> str:
    lines = ["K,loglik,bic,icl,converged,n_iter,status"]
    for k in sorted(results):
        r = results[k]
        if isinstance(r, FitResult):
            vals = [str(k), format_float(r.loglik), format_float(r.bic), format_float(r.icl),
                    str(int(r.converged)), str(r.n_iter), "ok"]
        else:
            vals = [str(k), "", "", "", "", "", "failed"]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    started = time.perf_counter()
    seed = args.seed if args.seed is not None else _default_seed()
    family = _family(args.family)
    if (args.k is None) == (args.k_range is None):
        raise UsageError("give exactly one of --k or --k-range")
    if args.k is not None and args.k < 1:
        raise UsageError("--k must be >= 1")
    ks = [args.k] if args.k is not None else _k_range(args.k_range)
    if args.restarts < 1 or args.jobs < 1:
        raise UsageError("--restarts and --jobs must be >= 1")
    try:
        data = read_dataset(args.input)
    except ValueError as exc:
        raise OSError(f"cannot parse {args.input}: {exc}") from None
    try:
        cfg = FitConfig(
            seed=seed,
            restarts=args.restarts,
            method=args.method,
            estimator=args.estimator,
            jobs=args.jobs,
            restart_criterion=args.restart_criterion,
        )
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None
    criterion = args.criterion.lower()
    if args.k is not None:
        res = fit(data.X, args.k, family, cfg)
        results = {args.k: res}
    else:
        best_k, results = select_k(data.X, ks, criterion, family, cfg)
        res = results[best_k]
    prefix = args.out
    outputs = [prefix + ".model.json", prefix + ".assign.csv", prefix + ".criteria.csv"]
    _write_text(outputs[0], res.to_json(cfg, seed) + "\n")
    _write_text(outputs[1], _assignment_csv(res))
    _write_text(outputs[2], _criteria_csv(results))
    if data.labels is not None:
        logger.info("ARI against the label column: %.4f", adjusted_rand_index(data.labels, res.labels()))
    settings = {"family": str(family), "ks": ks, "criterion": criterion, "config": cfg.to_dict()}
    _write_manifest(prefix, args.command, settings, seed, [args.input], outputs, started)
    return EXIT_OK


# ---------------------------------------------------------------- benchmark


def cmd_benchmark(args) -> int:
    started = time.perf_counter()
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    with open(args.grid, encoding="utf-8") as fh:
        text = fh.read()
    try:
        grid = parse_grid(text)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None
    _write_text(args.out, run_grid(grid, args.jobs))
    settings = {"grid": text, "jobs": args.jobs}
    _write_manifest(args.out, "benchmark", settings, None, [args.grid], [args.out], started)
    return EXIT_OK


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="robmix", description="Robust mixture model fitting via geometric medians.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="simulate a contaminated mixture dataset")
    g.add_argument("--family", default="gaussian", help="gaussian, laplace or student[:nu]")
    g.add_argument("--scenario", default="a", choices=SCENARIOS)
    g.add_argument("--delta", type=float, default=0.0, help="contamination rate in [0, 0.5]")
    g.add_argument("--nk", help="comma-separated cluster sizes")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--preset", default="paper3", choices=sorted(PRESETS))
    src.add_argument("--mu-file", help="CSV of centers, one row per cluster")
    g.add_argument("--sigma-file", help="CSV of K stacked d x d covariances (with --mu-file)")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    for name, hlp in (("fit", "fit a mixture with --k, or select K with --k-range"), ("select", "alias of fit")):
        f = sub.add_parser(name, help=hlp)
        f.add_argument("--in", dest="input", required=True)
        f.add_argument("--k", type=int)
        f.add_argument("--k-range", help="lo:hi, inclusive")
        f.add_argument("--family", default="gaussian")
        f.add_argument("--criterion", default="bic", choices=["bic", "icl", "BIC", "ICL"])
        f.add_argument("--restarts", type=int, default=5)
        f.add_argument("--method", default="robust", choices=["robust", "naive"])
        f.add_argument("--estimator", default="weiszfeld", choices=["weiszfeld", "asgd"])
        f.add_argument("--restart-criterion", default="trimmed", choices=["trimmed", "loglik"])
        f.add_argument("--jobs", type=int, default=1)
        f.add_argument("--seed", type=int)
        f.add_argument("--out", required=True, help="output prefix")
        f.set_defaults(func=cmd_fit)

    b = sub.add_parser("benchmark", help="run a robust-versus-naive simulation grid")
    b.add_argument("--grid", required=True, help="INI grid file")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", required=True, help="results CSV")
    b.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"robmix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"robmix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FitFailureError, NumericalFailureError) as exc:
        print(f"robmix: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (OSError, InvalidInputError) as exc:
        # data problems in input files surface as InvalidInputError
        print(f"robmix: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
