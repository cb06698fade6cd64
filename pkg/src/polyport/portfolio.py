"""Portfolio loss polynomials.

The loss of holding proportions ``x`` under returns ``xi`` is::

    F(x, xi) = -lam_1 r + lam_2 r_2 - lam_3 r_3 + ... + (-1)^d lam_d r_d

with ``r = x'xi`` and ``r_i = (r - E r)^i``.  Every builder here returns the
loss already restricted to the budget hyperplane, i.e. as a polynomial in the
first ``n - 1`` proportions with ``x_n = 1 - sum(x_1..x_{n-1})``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial, prod
from typing import Sequence

import numpy as np

from .polynomials import Polynomial, _exponents_of_degree, eliminate_last_variable

DEFAULT_MAX_DEGREE = 6


@dataclass(frozen=True)
class RiskPreference:
    """Weights ``(lam_1, ..., lam_d)`` on the mean and central moments 2..d."""

    lam: tuple[float, ...]

    def __init__(self, lam: Sequence[float]):
        lam = tuple(float(v) for v in lam)
        if not lam:
            raise ValueError("lambda must have at least one entry")
        if any(not np.isfinite(v) or v < 0 for v in lam):
            raise ValueError(f"lambda entries must be finite and nonnegative, got {lam}")
        if abs(sum(lam) - 1.0) > 1e-12:
            raise ValueError(f"lambda must sum to 1, sums to {sum(lam)!r}")
        object.__setattr__(self, "lam", lam)

    @property
    def d(self) -> int:
        return len(self.lam)


@dataclass(frozen=True)
class ReturnSamples:
    """``N x n`` matrix of asset returns, one sample per row."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("return samples must be a 2-d array")
        if v.shape[0] < 1 or v.shape[1] < 2:
            raise ValueError(f"need N >= 1 samples of n >= 2 assets, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("return samples contain non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NormalModel:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.covariance, dtype=float)
        if cov.shape != (mu.size, mu.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {mu.size}")
        if not np.allclose(cov, cov.T, atol=1e-12, rtol=0):
            raise ValueError("covariance must be symmetric")
        if mu.size and np.linalg.eigvalsh(cov)[0] < -1e-10:
            raise ValueError("covariance is not positive semidefinite")
        mu.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", cov)

    @property
    def n(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class SampleSummary:
    sample_mean: np.ndarray
    sample_covariance: np.ndarray


def portfolio_return(samples: ReturnSamples, j: int) -> Polynomial:
    """Realised return of sample ``j`` as a linear polynomial in ``x_1..x_{n-1}``."""
    if not 0 <= j < samples.N:
        raise IndexError(f"sample index {j} out of range for N={samples.N}")
    xi = samples.values[j]
    return Polynomial.linear(xi[:-1] - xi[-1], xi[-1])


def _centered_design(samples: ReturnSamples) -> np.ndarray:
    """Rows ``z_j`` with ``rho_j(x) - mean_rho(x) = z_j . (1, x_1, .., x_{n-1})``."""
    v = samples.values
    z = np.empty_like(v)
    z[:, 0] = v[:, -1]
    z[:, 1:] = v[:, :-1] - v[:, -1:]
    return z - z.mean(axis=0)


def sample_central_moment_poly(samples: ReturnSamples, i: int) -> Polynomial:
    """Sample ``i``-th central moment of the portfolio return, as a polynomial.

    ``(1/N) sum_j (rho_j(x) - rho_bar(x))^i`` with ``rho_bar`` the sample-average
    return, expanded with the multinomial theorem over the centred design.
    """
    if i < 2:
        raise ValueError("central moments start at order 2")
    z = _centered_design(samples)
    n = samples.n
    terms = []
    for beta in _exponents_of_degree(n, i):
        mult = factorial(i) // prod(factorial(b) for b in beta)
        moment = float(np.mean(np.prod(z ** np.asarray(beta), axis=1)))
        terms.append((beta[1:], mult * moment))
    return Polynomial(n - 1, terms)


def sample_mean_return_poly(samples: ReturnSamples) -> Polynomial:
    xi_bar = samples.values.mean(axis=0)
    return Polynomial.linear(xi_bar[:-1] - xi_bar[-1], xi_bar[-1])


def build_sample_loss(samples: ReturnSamples, pref: RiskPreference,
                      max_degree: int = DEFAULT_MAX_DEGREE) -> Polynomial:
    """Sample-average loss ``f_N`` in ``n - 1`` variables."""
    if pref.d > max_degree:
        raise ValueError(f"moment order {pref.d} exceeds the configured cap {max_degree}")
    f = -pref.lam[0] * sample_mean_return_poly(samples)
    for i in range(2, pref.d + 1):
        if pref.lam[i - 1]:
            f = f + ((-1) ** i * pref.lam[i - 1]) * sample_central_moment_poly(samples, i)
    return f


def _quadratic_form(mat: np.ndarray) -> Polynomial:
    n = mat.shape[0]
    terms = []
    for a in range(n):
        for b in range(n):
            alpha = [0] * n
            alpha[a] += 1
            alpha[b] += 1
            terms.append((tuple(alpha), mat[a, b]))
    return Polynomial(n, terms)


def build_analytic_normal_loss(model: NormalModel, pref: RiskPreference) -> Polynomial:
    """Exact expected loss for normal returns, restricted to the budget hyperplane.

    Odd central moments of a normal vanish, the variance is ``x' Sigma x`` and
    the fourth central moment is ``3 (x' Sigma x)^2``; orders above 4 are not
    supported.
    """
    if pref.d > 4:
        raise ValueError("analytic normal losses are available up to order 4")
    if model.n < 2:
        raise ValueError("need at least two assets")
    lam = pref.lam + (0.0,) * (4 - pref.d)
    f = -lam[0] * Polynomial.linear(model.mean)
    var = _quadratic_form(model.covariance)
    if lam[1]:
        f = f + lam[1] * var
    if lam[3]:
        f = f + 3.0 * lam[3] * var * var
    return eliminate_last_variable(f)


def summarize(samples: ReturnSamples) -> SampleSummary:
    """Sample mean and the ``1/N`` sample covariance."""
    if samples.N < 2:
        raise ValueError("need at least two samples")
    v = samples.values
    mean = v.mean(axis=0)
    centered = v - mean
    cov = centered.T @ centered / samples.N
    return SampleSummary(mean, 0.5 * (cov + cov.T))


def full_proportions(xbar: Sequence[float]) -> np.ndarray:
    """Append the budget-implied last proportion."""
    xbar = np.asarray(xbar, dtype=float)
    return np.append(xbar, 1.0 - xbar.sum())
