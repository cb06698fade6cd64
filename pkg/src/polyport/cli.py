"""Command-line front-end: ``solve``, ``study`` and ``ingest``.

Exit codes: 0 tight optimum, 2 Optimal but not certified tight, 1 solver
failure, 64 malformed config or arguments, 66 unreadable input data.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any

import numpy as np

from .conic import SolverSettings
from .data import (
    DataError,
    convergence_study,
    read_price_csv,
    read_returns_csv,
    prices_to_returns,
    sample_normal,
    write_returns_csv,
    write_scatter_csv,
)
from .portfolio import (
    DEFAULT_MAX_DEGREE,
    NormalModel,
    RiskPreference,
    build_analytic_normal_loss,
    build_sample_loss,
)
from .psaa import PSAA_SOLVER, PsaaConfig, PsaaFailure, PsaaResult, run, solve_at

EXIT_TIGHT = 0
EXIT_FAILURE = 1
EXIT_NOT_TIGHT = 2
EXIT_USAGE = 64
EXIT_NOINPUT = 66

SOLVE_KEYS = {"assets", "degree", "lambda", "epsilon0", "short_selling", "rank_tol",
              "max_doublings", "solver", "source", "output"}
STUDY_KEYS = {"model", "lambda", "degree", "N_grid", "replications", "base_seed", "reference",
              "epsilon0", "short_selling", "rank_tol", "max_doublings", "solver", "output"}
SOLVER_KEYS = {"gap_tol", "feas_tol", "max_iter"}
SOURCE_KINDS = {"csv_prices", "csv_returns", "normal", "analytic_normal"}

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config parsing
# --------------------------------------------------------------------------

def _load_json(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _number(obj: dict, key: str, default=None, *, integer=False, where="config"):
    if key not in obj:
        if default is None:
            raise ConfigError(f"{where}.{key}: required")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key}: expected a finite number, got {v!r}")
    if integer:
        if int(v) != v:
            raise ConfigError(f"{where}.{key}: expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _vector(v, where: str) -> np.ndarray:
    try:
        arr = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected numbers") from None
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{where}: entries must be finite")
    return arr


def _preference(doc: dict) -> RiskPreference:
    if "lambda" not in doc or not isinstance(doc["lambda"], list):
        raise ConfigError("lambda: required list of weights")
    lam = _vector(doc["lambda"], "lambda")
    if lam.ndim != 1 or lam.size == 0:
        raise ConfigError("lambda: expected a nonempty list")
    if "degree" in doc and _number(doc, "degree", integer=True) != lam.size:
        raise ConfigError(f"degree: {doc['degree']} does not match {lam.size} lambda entries")
    if lam.size > DEFAULT_MAX_DEGREE:
        raise ConfigError(f"degree: at most {DEFAULT_MAX_DEGREE} supported, got {lam.size}")
    if np.any(lam < 0):
        raise ConfigError("lambda: entries must be nonnegative")
    if abs(lam.sum() - 1.0) > 1e-12:
        raise ConfigError(f"lambda: entries must sum to 1 (sum is {lam.sum():.12g})")
    return RiskPreference(lam)


def _solver(doc: dict) -> SolverSettings:
    sub = doc.get("solver", {})
    if not isinstance(sub, dict):
        raise ConfigError("solver: expected an object")
    _check_keys(sub, SOLVER_KEYS, "solver")
    try:
        return SolverSettings(
            gap_tol=_number(sub, "gap_tol", PSAA_SOLVER.gap_tol, where="solver"),
            feas_tol=_number(sub, "feas_tol", PSAA_SOLVER.feas_tol, where="solver"),
            max_iter=_number(sub, "max_iter", PSAA_SOLVER.max_iter, integer=True, where="solver"),
        )
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from exc


def _flag(doc: dict, key: str) -> bool:
    v = doc.get(key, False)
    if not isinstance(v, bool):
        raise ConfigError(f"{key}: expected true or false")
    return v


def _psaa_settings(doc: dict) -> tuple[float, PsaaConfig | None, dict]:
    """``(epsilon0, config or None when epsilon0 == 0, fixed-epsilon kwargs)``."""
    eps = _number(doc, "epsilon0", 0.01)
    if eps < 0:
        raise ConfigError(f"epsilon0: must be nonnegative, got {eps}")
    rank_tol = _number(doc, "rank_tol", 1e-6)
    if not 0 < rank_tol < 1:
        raise ConfigError(f"rank_tol: must lie in (0, 1), got {rank_tol}")
    doublings = _number(doc, "max_doublings", 20, integer=True)
    if doublings < 0:
        raise ConfigError("max_doublings: must be nonnegative")
    short = _flag(doc, "short_selling")
    solver = _solver(doc)
    fixed = dict(short_selling=short, rank_tol=rank_tol, solver=solver)
    if eps == 0:
        return eps, None, fixed
    return eps, PsaaConfig(eps, doublings, rank_tol, short, solver), fixed


def _model(obj, where: str) -> NormalModel:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    _check_keys(obj, {"mean", "covariance", "N", "seed"}, where)
    for key in ("mean", "covariance"):
        if key not in obj:
            raise ConfigError(f"{where}.{key}: required")
    try:
        return NormalModel(_vector(obj["mean"], f"{where}.mean"),
                           _vector(obj["covariance"], f"{where}.covariance"))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _resolve(base: Path, p) -> Path:
    if not isinstance(p, str) or not p:
        raise ConfigError("paths must be nonempty strings")
    path = Path(p)
    return path if path.is_absolute() else base / path


def _build_loss(doc: dict, pref: RiskPreference, base: Path):
    """Return ``(f_N, asset names)`` from the single configured source."""
    src = doc.get("source")
    if not isinstance(src, dict):
        raise ConfigError("source: required object")
    _check_keys(src, SOURCE_KINDS, "source")
    if len(src) != 1:
        raise ConfigError(f"source: exactly one of {sorted(SOURCE_KINDS)} required")
    kind, spec = next(iter(src.items()))
    if kind in ("csv_prices", "csv_returns"):
        path = _resolve(base, spec)
        if kind == "csv_prices":
            series = read_price_csv(path)
            assets, samples = series.assets, prices_to_returns(series)
        else:
            assets, samples = read_returns_csv(path)
        return build_sample_loss(samples, pref), assets
    model = _model(spec, f"source.{kind}")
    assets = tuple(f"S{i + 1}" for i in range(model.n))
    if kind == "analytic_normal":
        if "N" in spec or "seed" in spec:
            raise ConfigError(f"source.{kind}: N and seed do not apply")
        return build_analytic_normal_loss(model, pref), assets
    N = _number(spec, "N", where=f"source.{kind}", integer=True)
    seed = _number(spec, "seed", where=f"source.{kind}", integer=True)
    if N < 2:
        raise ConfigError(f"source.{kind}.N: need at least 2 samples")
    return build_sample_loss(sample_normal(model, N, seed), pref), assets


# --------------------------------------------------------------------------
# result documents
# --------------------------------------------------------------------------

def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def result_document(res: PsaaResult | None, assets, failure: PsaaFailure | None,
                    wall_time: float) -> dict[str, Any]:
    attempts = res.attempts if res is not None else failure.attempts
    doc = {
        "outcome": "failed" if res is None else ("tight" if res.tight else "not_tight"),
        "assets": list(assets),
        "x_star": None, "objective_fN": None, "epsilon_used": None,
        "rank_ratio": None, "raw_rank_ratio": None, "rounded": None, "tight": False,
        "relaxation_value": None, "duality_gap": None, "iterations": None,
        "solver_status": attempts[-1].status.value if attempts else None, "d0": None,
        "attempts": [
            {"epsilon": a.epsilon, "status": a.status.value, "objective": _num(a.objective),
             "iterations": a.iterations} for a in attempts
        ],
        "message": str(failure) if failure is not None else None,
        "timing": {"wall_time_s": wall_time},
    }
    if res is not None:
        doc.update(
            x_star=[float(v) for v in res.x_star],
            objective_fN=_num(res.objective_fN),
            epsilon_used=res.epsilon_used,
            rank_ratio=_num(res.rank_ratio),
            raw_rank_ratio=_num(res.raw_rank_ratio),
            rounded=res.rounded,
            tight=res.tight,
            relaxation_value=_num(res.relaxation_value),
            duality_gap=_num(res.solver.gap),
            iterations=res.solver.iterations,
            d0=res.d0,
        )
    return doc


def _summary(doc: dict) -> str:
    if doc["x_star"] is None:
        return f"failed: {doc['message']}"
    x = ", ".join(f"{v:.4f}" for v in doc["x_star"])
    return (f"{doc['outcome']}: x* = ({x}), f_N = {doc['objective_fN']:.4f}, "
            f"eps = {doc['epsilon_used']:.4g}, rank ratio = {doc['rank_ratio']:.2e}")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_solve(config_path: str) -> int:
    path = Path(config_path)
    doc = _load_json(path)
    _check_keys(doc, SOLVE_KEYS, "config")
    pref = _preference(doc)
    eps, config, fixed = _psaa_settings(doc)
    f_N, assets = _build_loss(doc, pref, path.parent)
    if "assets" in doc:
        names = doc["assets"]
        if not isinstance(names, list) or not all(isinstance(a, str) for a in names):
            raise ConfigError("assets: expected a list of names")
        if len(names) != len(assets):
            raise ConfigError(f"assets: {len(names)} names for {len(assets)} assets in the source")
        assets = tuple(names)
    start = time.perf_counter()
    res, failure = None, None
    try:
        res = run(f_N, config) if config is not None else solve_at(f_N, eps, **fixed)
    except PsaaFailure as exc:
        failure = exc
    out = result_document(res, assets, failure, time.perf_counter() - start)
    text = json.dumps(out, indent=2)
    if "output" in doc:
        _resolve(path.parent, doc["output"]).write_text(text + "\n", encoding="utf-8")
        print(_summary(out))
    else:
        print(text)
    if res is None:
        return EXIT_FAILURE
    return EXIT_TIGHT if res.tight else EXIT_NOT_TIGHT


STUDY_COLUMNS = ("N", "replication", "epsilon", "distance", "objective_gap", "tight")


def cmd_study(config_path: str) -> int:
    path = Path(config_path)
    doc = _load_json(path)
    _check_keys(doc, STUDY_KEYS, "config")
    pref = _preference(doc)
    model = _model(doc.get("model"), "model")
    if "N" in doc["model"] or "seed" in doc["model"]:
        raise ConfigError("model: N and seed belong to N_grid and base_seed")
    grid = doc.get("N_grid")
    if not isinstance(grid, list) or not grid:
        raise ConfigError("N_grid: required nonempty list")
    if not all(isinstance(N, int) and not isinstance(N, bool) and N >= 2 for N in grid):
        raise ConfigError("N_grid: entries must be integers >= 2")
    if grid != sorted(set(grid)):
        raise ConfigError("N_grid: must be strictly ascending")
    reps = _number(doc, "replications", integer=True)
    if reps < 1:
        raise ConfigError("replications: must be at least 1")
    seed = _number(doc, "base_seed", 0, integer=True)
    eps, config, _ = _psaa_settings(doc)
    if config is None:
        raise ConfigError("epsilon0: the study needs a positive epsilon0")
    reference = None
    if "reference" in doc:
        reference = _vector(doc["reference"], "reference")
        if reference.shape != (model.n,):
            raise ConfigError(f"reference: expected {model.n} proportions")
    if "output" not in doc:
        raise ConfigError("output: required CSV path")
    report = convergence_study(model, pref, reference, grid, reps, seed, config)
    out_path = _resolve(path.parent, doc["output"])
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(STUDY_COLUMNS)
        for c in report.cells:
            w.writerow([c.N, c.replication, repr(c.epsilon), repr(c.distance),
                        repr(c.objective_gap), str(c.tight).lower()])
    for N in report.N_grid:
        print(f"N = {N}: median distance {report.median_distance(N):.4f}, "
              f"median |gap| {report.median_abs_gap(N):.4f}")
    return EXIT_TIGHT


def scatter_path(returns_path: Path) -> Path:
    return returns_path.with_name(returns_path.stem + "_scatter.csv")


def cmd_ingest(prices_path: str, out_path: str) -> int:
    series = read_price_csv(prices_path)
    out = Path(out_path)
    samples = write_returns_csv(out, series)
    write_scatter_csv(scatter_path(out), series.assets, samples)
    print(f"wrote {samples.N} return rows for {samples.n} assets to {out}")
    return EXIT_TIGHT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyport", description="Polynomial portfolio optimisation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="run the perturbation-SAA solver on a JSON config")
    p.add_argument("config")
    p = sub.add_parser("study", help="Monte Carlo convergence study; writes a CSV")
    p.add_argument("config")
    p = sub.add_parser("ingest", help="turn a price CSV into returns and scatter CSVs")
    p.add_argument("prices")
    p.add_argument("returns")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            return cmd_solve(args.config)
        if args.command == "study":
            return cmd_study(args.config)
        return cmd_ingest(args.prices, args.returns)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
