"""Perturbation-SAA driver.

Minimises ``f_N(x) + eps * ||[x]_{2 d0}||`` over the simplex (or over all of
``R^{n-1}`` when short selling is allowed) through its order-``d0`` moment
relaxation.  A rank-one moment block certifies that the relaxation is tight,
and the first-order moments then give the optimal proportions.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .conic import (
    ConicProgram,
    ConicSolution,
    SolverSettings,
    Status,
    solve,
)
from .moments import apply, localizing_map, moment_map
from .polynomials import (
    Polynomial,
    Tms,
    coefficient_vector,
    monomial_basis,
    monomial_norm,
    monomial_vector,
)

log = logging.getLogger(__name__)

# Default accuracy for PSAA solves.  The rank test compares the second singular
# value of the moment block against 1e-6, which needs a few more digits than
# the library-wide 1e-8 solver default gives on degenerate higher-order blocks.
PSAA_SOLVER = SolverSettings(gap_tol=1e-10, feas_tol=1e-10)
FALLBACK_SOLVER = SolverSettings()
# Rounding to a point mass is accepted when its PSAA value is within this
# relative distance of the dual lower bound.
ROUNDING_GAP_TOL = 1e-8
FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class PsaaConfig:
    epsilon0: float = 0.01
    max_doublings: int = 20
    rank_tol: float = 1e-6
    short_selling: bool = False
    solver: SolverSettings = PSAA_SOLVER

    def __post_init__(self):
        if not (np.isfinite(self.epsilon0) and self.epsilon0 > 0):
            raise ValueError(f"epsilon0 must be positive, got {self.epsilon0}")
        if self.max_doublings < 0:
            raise ValueError("max_doublings must be nonnegative")
        if not 0 < self.rank_tol < 1:
            raise ValueError("rank_tol must lie in (0, 1)")


@dataclass(frozen=True)
class RelaxationSpec:
    f_N: Polynomial
    g: tuple[Polynomial, ...]
    d0: int

    def __post_init__(self):
        if self.d0 < 1:
            raise ValueError("relaxation order must be at least 1")
        need = max(1, ceil(self.f_N.degree / 2), *(ceil(gi.degree / 2) for gi in self.g))
        if self.d0 < need:
            raise ValueError(f"relaxation order {self.d0} below the minimum {need}")
        for gi in self.g:
            if gi.nvars != self.f_N.nvars:
                raise ValueError("constraint and objective variable counts differ")

    @property
    def nvars(self) -> int:
        return self.f_N.nvars


@dataclass
class Attempt:
    epsilon: float
    status: Status
    objective: float
    iterations: int


@dataclass
class PsaaResult:
    x_star: np.ndarray
    objective_fN: float
    epsilon_used: float
    rank_ratio: float
    tight: bool
    relaxation_value: float
    solver: ConicSolution
    d0: int
    y_star: Tms | None = None  # moment vector whose block gave rank_ratio
    raw_rank_ratio: float = float("nan")  # ratio of the solver's own iterate
    rounded: bool = False
    certified_gap: float = float("nan")
    degenerate: bool = False
    attempts: list[Attempt] = field(default_factory=list)

    @property
    def perturbed_value(self) -> float:
        """``f_N(x*) + eps ||[x*]_{2 d0}||``, which equals the relaxation value when tight."""
        return self.objective_fN + self.epsilon_used * monomial_norm(self.x_star[:-1], 2 * self.d0)


class PsaaFailure(RuntimeError):
    """No Optimal solve was reached; ``attempts`` records every try."""

    def __init__(self, message: str, attempts: list[Attempt], last: ConicSolution | None):
        super().__init__(message)
        self.attempts = attempts
        self.last = last


def simplex_constraints(nvars: int) -> tuple[Polynomial, ...]:
    """``(x_1, ..., x_{n-1}, 1 - sum x)`` for ``nvars = n - 1``."""
    g = [Polynomial.variable(i, nvars) for i in range(nvars)]
    g.append(Polynomial.linear([-1.0] * nvars, 1.0))
    return tuple(g)


def relaxation_spec(f_N: Polynomial, short_selling: bool = False,
                    order: int | None = None) -> RelaxationSpec:
    """Default order is ``ceil(deg f_N / 2)`` (at least 1); ``order`` may raise it."""
    d0 = max(1, ceil(f_N.degree / 2))
    if order is not None:
        d0 = order
    g = () if short_selling else simplex_constraints(f_N.nvars)
    return RelaxationSpec(f_N, g, d0)


def assemble_relaxation(spec: RelaxationSpec, epsilon: float) -> ConicProgram:
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    n1, d0 = spec.nvars, spec.d0
    basis = monomial_basis(n1, 2 * d0)
    blocks = [moment_map(d0, n1)]
    polys = [Polynomial.constant(1.0, n1)]
    for gi in spec.g:
        blocks.append(localizing_map(gi, d0, n1))
        polys.append(gi)
    return ConicProgram(
        nvars=n1,
        degree=2 * d0,
        c=coefficient_vector(spec.f_N, basis),
        epsilon=float(epsilon),
        psd_blocks=tuple(blocks),
        block_polys=tuple(polys),
    )


def rank_ratio(M: np.ndarray) -> float:
    """``sigma_2 / sigma_1``; 0 for a zero matrix or a 1 x 1 block."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("rank_ratio expects a square matrix")
    if M.shape[0] < 2:
        return 0.0
    sv = np.linalg.svd(0.5 * (M + M.T), compute_uv=False)
    if sv[0] == 0.0:
        return 0.0
    return float(sv[1] / sv[0])


def extract_minimizer(y: Tms, n: int) -> np.ndarray:
    """``(u, 1 - sum u)`` with ``u`` the first-order moments of ``y``."""
    if y.nvars != n - 1:
        raise ValueError(f"tms has {y.nvars} variables, expected {n - 1}")
    if y.degree < 2:
        raise ValueError("need a tms of degree at least 2")
    u = y.first_moments()
    return np.append(u, 1.0 - u.sum())


def _solve_with_fallback(prog: ConicProgram, settings: SolverSettings) -> ConicSolution:
    sol = solve(prog, settings)
    if sol.status == Status.NUMERICAL_FAILURE and settings != FALLBACK_SOLVER:
        # The tightened tolerances can outrun double precision; the library
        # default is a legitimate answer in that case.
        log.debug("numerical failure at eps=%g, retrying with default tolerances", prog.epsilon)
        sol = solve(prog, FALLBACK_SOLVER)
    return sol


def _round_to_point(spec: RelaxationSpec, sol: ConicSolution, epsilon: float,
                    ) -> tuple[Tms, float] | None:
    """Certify the point mass at the first moments, or return None.

    The point ``u`` is feasible and its PSAA value ``v`` sits above the dual
    bound by at most ``ROUNDING_GAP_TOL (1 + |v|)``.  Then ``[u]_{2 d0}`` is an
    optimal moment vector of rank one, up to that gap.
    """
    u = sol.y.first_moments()
    if any(gi(u) < -FEASIBILITY_TOL for gi in spec.g):
        return None
    v = spec.f_N(u) + epsilon * monomial_norm(u, 2 * spec.d0)
    gap = v - sol.dual_objective
    if gap > ROUNDING_GAP_TOL * (1.0 + abs(v)):
        return None
    return monomial_vector(u, 2 * spec.d0), gap


def _finish(spec: RelaxationSpec, prog: ConicProgram, sol: ConicSolution, rank_tol: float,
            attempts: list[Attempt]) -> PsaaResult:
    M = apply(prog.psd_blocks[0], sol.y)
    raw = rank_ratio(M)
    y_star, ratio, rounded, gap = sol.y, raw, False, float("nan")
    if raw > rank_tol:
        # Interior-point iterates approach a rank-one face slowly when strict
        # complementarity fails, so a large raw ratio is not yet a verdict.
        cert = _round_to_point(spec, sol, prog.epsilon)
        if cert is not None:
            y_star, gap = cert
            ratio = rank_ratio(apply(prog.psd_blocks[0], y_star))
            rounded = True
    x_star = extract_minimizer(y_star, spec.nvars + 1)
    tight = ratio <= rank_tol
    if not tight:
        log.warning("moment block has rank ratio %.3g > %.3g; the point is a heuristic candidate",
                    ratio, rank_tol)
    return PsaaResult(
        x_star=x_star,
        objective_fN=spec.f_N(x_star[:-1]),
        epsilon_used=prog.epsilon,
        rank_ratio=ratio,
        tight=tight,
        relaxation_value=sol.objective,
        solver=sol,
        d0=spec.d0,
        y_star=y_star,
        raw_rank_ratio=raw,
        rounded=rounded,
        certified_gap=gap,
        degenerate=float(np.abs(M).max()) == 0.0,
        attempts=attempts,
    )


def solve_at(f_N: Polynomial, epsilon: float, *, short_selling: bool = False,
             rank_tol: float = 1e-6, solver: SolverSettings = PSAA_SOLVER,
             order: int | None = None) -> PsaaResult:
    """One relaxation solve at a fixed ``epsilon`` (``0`` gives the plain SAA relaxation).

    Raises :class:`PsaaFailure` when the solve is not Optimal.
    """
    spec = relaxation_spec(f_N, short_selling, order)
    prog = assemble_relaxation(spec, epsilon)
    sol = _solve_with_fallback(prog, solver)
    attempts = [Attempt(prog.epsilon, sol.status, sol.objective, sol.iterations)]
    if not sol.optimal:
        raise PsaaFailure(f"relaxation at eps={epsilon:g} ended with {sol.status.value}", attempts, sol)
    return _finish(spec, prog, sol, rank_tol, attempts)


def run(f_N: Polynomial, config: PsaaConfig = PsaaConfig(), order: int | None = None) -> PsaaResult:
    """Solve, doubling epsilon after every non-Optimal status."""
    spec = relaxation_spec(f_N, config.short_selling, order)
    eps = config.epsilon0
    attempts: list[Attempt] = []
    sol = None
    for _ in range(config.max_doublings + 1):
        prog = assemble_relaxation(spec, eps)
        sol = _solve_with_fallback(prog, config.solver)
        attempts.append(Attempt(eps, sol.status, sol.objective, sol.iterations))
        if sol.optimal:
            return _finish(spec, prog, sol, config.rank_tol, attempts)
        log.info("eps=%g gave %s; doubling", eps, sol.status.value)
        eps *= 2.0
    raise PsaaFailure(
        f"no Optimal relaxation after {config.max_doublings} doublings "
        f"(last eps={attempts[-1].epsilon:g}, status {attempts[-1].status.value})",
        attempts, sol,
    )
