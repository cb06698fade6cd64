"""Price ingestion, seeded normal sampling and the Monte Carlo convergence study."""
from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .portfolio import (
    NormalModel,
    ReturnSamples,
    RiskPreference,
    build_analytic_normal_loss,
    build_sample_loss,
)
from .psaa import PsaaConfig, PsaaFailure, run, solve_at

log = logging.getLogger(__name__)

PSD_TOL = 1e-10


class DataError(ValueError):
    """Malformed or unreadable input data."""


@dataclass(frozen=True)
class PriceSeries:
    assets: tuple[str, ...]
    prices: np.ndarray  # (N + 1) x n, chronological
    dates: tuple[str, ...] = ()

    def __post_init__(self):
        p = np.array(self.prices, dtype=float)
        if p.ndim != 2 or p.shape[1] != len(self.assets):
            raise DataError(f"price matrix of shape {p.shape} does not match {len(self.assets)} assets")
        if p.shape[0] < 2:
            raise DataError("need at least two price rows")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            bad = np.argwhere(~(p > 0) | ~np.isfinite(p))[0]
            raise DataError(f"price at row {bad[0]}, asset {self.assets[bad[1]]!r} is not positive")
        if self.dates and len(self.dates) != p.shape[0]:
            raise DataError("dates and price rows differ in length")
        p.setflags(write=False)
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "prices", p)
        object.__setattr__(self, "dates", tuple(self.dates))


def prices_to_returns(series: PriceSeries) -> ReturnSamples:
    p = series.prices
    return ReturnSamples((p[1:] - p[:-1]) / p[:-1])


def _read_table(path: Path, kind: str) -> tuple[tuple[str, ...], list[str], np.ndarray]:
    """Parse ``date,<asset>,...`` CSV; errors carry 1-based line numbers."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 3 or header[0].lower() != "date":
        raise DataError(f"{path}:1: header must be 'date,<asset1>,<asset2>,...'")
    assets = tuple(header[1:])
    if len(set(assets)) != len(assets) or not all(assets):
        raise DataError(f"{path}:1: asset names must be nonempty and distinct")
    dates, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
        try:
            dt.date.fromisoformat(row[0].strip())
        except ValueError:
            raise DataError(f"{path}:{lineno}: {row[0]!r} is not an ISO-8601 date") from None
        try:
            vals = [float(cell) for cell in row[1:]]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric {kind}") from None
        if not all(np.isfinite(vals)):
            raise DataError(f"{path}:{lineno}: non-finite {kind}")
        if kind == "price" and min(vals) <= 0:
            raise DataError(f"{path}:{lineno}: prices must be positive")
        dates.append(row[0].strip())
        values.append(vals)
    return assets, dates, np.array(values, dtype=float).reshape(len(values), len(assets))


def read_price_csv(path: str | Path) -> PriceSeries:
    assets, dates, prices = _read_table(Path(path), "price")
    if prices.shape[0] < 2:
        raise DataError(f"{path}: need at least two price rows, found {prices.shape[0]}")
    return PriceSeries(assets, prices, tuple(dates))


def read_returns_csv(path: str | Path) -> tuple[tuple[str, ...], ReturnSamples]:
    assets, _, values = _read_table(Path(path), "return")
    if values.shape[0] < 1:
        raise DataError(f"{path}: no return rows")
    return assets, ReturnSamples(values)


def write_returns_csv(path: str | Path, series: PriceSeries) -> ReturnSamples:
    """Write returns dated by the end of each period; returns the samples."""
    samples = prices_to_returns(series)
    dates = series.dates[1:] if series.dates else [""] * samples.N
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["date", *series.assets])
        for d, row in zip(dates, samples.values):
            out.writerow([d, *(repr(float(v)) for v in row)])
    return samples


def write_scatter_csv(path: str | Path, assets: Sequence[str], samples: ReturnSamples) -> None:
    """Long-format ``asset,week,return`` rows; week counts from 1."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["asset", "week", "return"])
        for j, name in enumerate(assets):
            for t, v in enumerate(samples.values[:, j], start=1):
                out.writerow([name, t, repr(float(v))])


def covariance_factor(cov: np.ndarray) -> np.ndarray:
    """``L`` with ``L L' = cov``, clipping tiny negative eigenvalues to zero."""
    cov = np.asarray(cov, dtype=float)
    eig, vec = np.linalg.eigh(0.5 * (cov + cov.T))
    scale = max(1.0, float(np.abs(eig).max())) if eig.size else 1.0
    if eig.size and eig[0] < -PSD_TOL * scale:
        raise ValueError(f"covariance is not positive semidefinite (eigenvalue {eig[0]:.3g})")
    return vec * np.sqrt(np.clip(eig, 0.0, None))


def sample_normal(model: NormalModel, N: int, seed: int) -> ReturnSamples:
    if N < 1:
        raise ValueError("N must be positive")
    L = covariance_factor(model.covariance)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((N, model.n))
    return ReturnSamples(model.mean + z @ L.T)


def optimizer_distance(candidate: Sequence[float], reference_set: Iterable[Sequence[float]]) -> float:
    cand = np.asarray(candidate, dtype=float)
    refs = [np.asarray(r, dtype=float) for r in reference_set]
    if not refs:
        raise ValueError("reference set is empty")
    for r in refs:
        if r.shape != cand.shape:
            raise ValueError(f"dimension mismatch: {cand.shape} vs {r.shape}")
    return float(min(np.linalg.norm(cand - r) for r in refs))


def cell_seed(base_seed: int, N: int, replication: int) -> int:
    """64-bit seed for one study cell.

    The triple is hashed by numpy's ``SeedSequence`` and the first 64-bit word of
    its state is used, so the value depends only on the triple and is the same
    on every platform.
    """
    ss = np.random.SeedSequence([base_seed, N, replication])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class StudyCell:
    N: int
    replication: int
    seed: int
    epsilon: float
    distance: float
    objective: float  # f_N at the extracted point
    objective_gap: float  # objective - reference objective
    tight: bool
    status: str


@dataclass(frozen=True)
class StudyReport:
    N_grid: tuple[int, ...]
    replications: int
    reference: np.ndarray
    reference_objective: float
    cells: tuple[StudyCell, ...]

    def for_N(self, N: int) -> list[StudyCell]:
        return [c for c in self.cells if c.N == N]

    def median_distance(self, N: int) -> float:
        return float(np.nanmedian([c.distance for c in self.for_N(N)]))

    def median_abs_gap(self, N: int) -> float:
        return float(np.nanmedian([abs(c.objective_gap) for c in self.for_N(N)]))


def reference_optimizer(model: NormalModel, pref: RiskPreference,
                        short_selling: bool = False) -> tuple[np.ndarray, float]:
    """Global minimiser and value of the analytic normal loss (plain relaxation, no perturbation)."""
    f0 = build_analytic_normal_loss(model, pref)
    res = solve_at(f0, 0.0, short_selling=short_selling)
    return res.x_star, res.objective_fN


def run_cell(model: NormalModel, pref: RiskPreference, reference: np.ndarray,
             reference_objective: float, N: int, replication: int, base_seed: int,
             config: PsaaConfig) -> StudyCell:
    seed = cell_seed(base_seed, N, replication)
    f_N = build_sample_loss(sample_normal(model, N, seed), pref)
    try:
        res = run(f_N, config)
    except PsaaFailure as exc:
        log.warning("cell N=%d rep=%d failed: %s", N, replication, exc)
        last = exc.attempts[-1]
        return StudyCell(N, replication, seed, last.epsilon, float("nan"), float("nan"),
                         float("nan"), False, last.status.value)
    return StudyCell(
        N=N, replication=replication, seed=seed, epsilon=res.epsilon_used,
        distance=optimizer_distance(res.x_star, [reference]),
        objective=res.objective_fN,
        objective_gap=res.objective_fN - reference_objective,
        tight=res.tight, status=res.solver.status.value,
    )


def convergence_study(model: NormalModel, pref: RiskPreference, reference: Sequence[float] | None,
                      N_grid: Sequence[int], replications: int, base_seed: int,
                      config: PsaaConfig = PsaaConfig()) -> StudyReport:
    """Distance of PSAA optimisers to the reference as the sample grows.

    ``reference=None`` computes it from the analytic normal loss.  Cells are
    independent, so the report does not depend on execution order.
    """
    grid = tuple(int(N) for N in N_grid)
    if not grid:
        raise ValueError("N grid is empty")
    if any(N < 1 for N in grid) or list(grid) != sorted(set(grid)):
        raise ValueError("N grid must be strictly ascending positive integers")
    if replications < 1:
        raise ValueError("replications must be at least 1")
    ref_x, ref_val = reference_optimizer(model, pref, config.short_selling)
    if reference is not None:
        ref_x = np.asarray(reference, dtype=float)
        if ref_x.shape != (model.n,):
            raise ValueError(f"reference has shape {ref_x.shape}, expected ({model.n},)")
        ref_val = build_analytic_normal_loss(model, pref)(ref_x[:-1])
    cells = tuple(
        run_cell(model, pref, ref_x, ref_val, N, r, base_seed, config)
        for N in grid for r in range(replications)
    )
    return StudyReport(grid, replications, ref_x, ref_val, cells)
