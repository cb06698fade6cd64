"""Sparse multivariate polynomials, graded monomial bases and moment vectors.

Polynomials are stored as a mapping ``exponent tuple -> coefficient``.  Dense
vectors only appear when a polynomial is laid out against a
:class:`MonomialBasis`, which fixes the graded ordering shared by every
moment/localizing matrix in the package::

    1, x1, ..., xn, x1^2, x1*x2, ..., xn^2, x1^3, ...

Within one total degree the exponents are sorted so that higher powers of
earlier variables come first.
"""
from __future__ import annotations

import itertools
from functools import lru_cache
from math import comb, prod
from typing import Iterable, Mapping, Sequence

import numpy as np

Exponent = tuple[int, ...]

# coefficients smaller than this after arithmetic are dropped
COEFF_TOL = 1e-14


def _exponents_of_degree(nvars: int, degree: int) -> list[Exponent]:
    """All exponents with total degree exactly ``degree``, x1-heavy first."""
    if nvars == 1:
        return [(degree,)]
    out = []
    for first in range(degree, -1, -1):
        for rest in _exponents_of_degree(nvars - 1, degree - first):
            out.append((first,) + rest)
    return out


def grlex_key(alpha: Sequence[int]) -> tuple:
    """Sort key realising the basis order (smaller key comes first)."""
    return (sum(alpha),) + tuple(-a for a in alpha)


class MonomialBasis:
    """Exponents of ``N^nvars_degree`` in graded order.

    Instances are cached per ``(nvars, degree)``; use :func:`monomial_basis`.
    """

    def __init__(self, nvars: int, degree: int):
        if nvars < 1:
            raise ValueError("nvars must be positive")
        if degree < 0:
            raise ValueError("degree must be nonnegative")
        self.nvars = nvars
        self.degree = degree
        self.exponents: tuple[Exponent, ...] = tuple(
            alpha for d in range(degree + 1) for alpha in _exponents_of_degree(nvars, d)
        )
        self._index = {alpha: i for i, alpha in enumerate(self.exponents)}
        self.array = np.array(self.exponents, dtype=np.int64).reshape(len(self), nvars)

    def __len__(self) -> int:
        return len(self.exponents)

    def __iter__(self):
        return iter(self.exponents)

    def __getitem__(self, i: int) -> Exponent:
        return self.exponents[i]

    def __contains__(self, alpha) -> bool:
        return tuple(alpha) in self._index

    def index(self, alpha: Sequence[int]) -> int:
        try:
            return self._index[tuple(alpha)]
        except KeyError:
            raise KeyError(f"exponent {tuple(alpha)} not in basis "
                           f"(nvars={self.nvars}, degree={self.degree})") from None

    def __repr__(self) -> str:
        return f"MonomialBasis(nvars={self.nvars}, degree={self.degree}, size={len(self)})"


@lru_cache(maxsize=None)
def monomial_basis(nvars: int, degree: int) -> MonomialBasis:
    return MonomialBasis(nvars, degree)


def basis_size(nvars: int, degree: int) -> int:
    return comb(nvars + degree, degree)


class Polynomial:
    """Immutable sparse real polynomial in ``nvars`` variables.

    Parameters
    ----------
    nvars : int
        Number of variables.
    terms : mapping, optional
        ``{exponent: coefficient}``.  Exponents may be any integer sequences of
        length ``nvars``; coefficients with magnitude below ``COEFF_TOL`` are
        dropped, repeated exponents are summed.
    """

    __slots__ = ("nvars", "_terms", "_degree")

    def __init__(self, nvars: int, terms: Mapping[Sequence[int], float] | Iterable = ()):
        if nvars < 1:
            raise ValueError("nvars must be positive")
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Exponent, float] = {}
        for alpha, c in items:
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != nvars:
                raise ValueError(f"exponent {alpha} does not have {nvars} entries")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent {alpha}")
            acc[alpha] = acc.get(alpha, 0.0) + float(c)
        self.nvars = nvars
        self._terms = {a: c for a, c in acc.items() if abs(c) >= COEFF_TOL}
        self._degree = max((sum(a) for a in self._terms), default=0)

    # construction helpers
    @classmethod
    def constant(cls, value: float, nvars: int) -> "Polynomial":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, i: int, nvars: int) -> "Polynomial":
        if not 0 <= i < nvars:
            raise IndexError(f"variable index {i} out of range for {nvars} variables")
        alpha = [0] * nvars
        alpha[i] = 1
        return cls(nvars, {tuple(alpha): 1.0})

    @classmethod
    def linear(cls, coeffs: Sequence[float], const: float = 0.0) -> "Polynomial":
        """``const + sum_i coeffs[i] * x_i``."""
        n = len(coeffs)
        terms = {(0,) * n: const}
        for i, c in enumerate(coeffs):
            alpha = [0] * n
            alpha[i] = 1
            terms[tuple(alpha)] = c
        return cls(n, terms)

    @property
    def terms(self) -> dict[Exponent, float]:
        return dict(self._terms)

    @property
    def degree(self) -> int:
        return self._degree

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, alpha: Sequence[int]) -> float:
        return self._terms.get(tuple(alpha), 0.0)

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(sorted(self._terms.items(), key=lambda t: grlex_key(t[0])))

    # arithmetic
    def _check(self, other: "Polynomial") -> None:
        if self.nvars != other.nvars:
            raise ValueError(f"variable count mismatch: {self.nvars} vs {other.nvars}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(float(other), self.nvars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for a, c in other._terms.items():
            out[a] = out.get(a, 0.0) + c
        return Polynomial(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial(self.nvars, {a: c * other for a, c in self._terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict[Exponent, float] = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                key = tuple(i + j for i, j in zip(a, b))
                out[key] = out.get(key, 0.0) + ca * cb
        return Polynomial(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, i: int):
        if not isinstance(i, (int, np.integer)) or i < 0:
            raise ValueError("power must be a nonnegative integer")
        if i == 0:
            return Polynomial.constant(1.0, self.nvars)
        # left-to-right products so p**3 is bitwise (p*p)*p; exponents stay small
        result = self
        for _ in range(i - 1):
            result = result * self
        return result

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self._terms.items())))

    def __call__(self, point: Sequence[float]) -> float:
        return evaluate(self, point)

    def allclose(self, other: "Polynomial", atol: float = 1e-12) -> bool:
        self._check(other)
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coefficient(a) - other.coefficient(a)) <= atol for a in keys)

    def __repr__(self) -> str:
        if not self._terms:
            return f"Polynomial({self.nvars}, 0)"
        parts = []
        for alpha, c in self:
            mono = "*".join(
                f"x{i + 1}" + (f"^{a}" if a > 1 else "") for i, a in enumerate(alpha) if a
            )
            parts.append(f"{c:+.6g}" + (f"*{mono}" if mono else ""))
        return f"Polynomial({self.nvars}, {' '.join(parts)})"


def add(p: Polynomial, q: Polynomial) -> Polynomial:
    p._check(q)
    return p + q


def mul(p: Polynomial, q: Polynomial) -> Polynomial:
    p._check(q)
    return p * q


def power(p: Polynomial, i: int) -> Polynomial:
    return p ** i


def evaluate(p: Polynomial, point: Sequence[float]) -> float:
    point = np.asarray(point, dtype=float)
    if point.shape != (p.nvars,):
        raise ValueError(f"point has shape {point.shape}, expected ({p.nvars},)")
    total = 0.0
    for alpha, c in p._terms.items():
        total += c * prod(point[j] ** a for j, a in enumerate(alpha) if a)
    return float(total)


def evaluate_many(p: Polynomial, points: np.ndarray) -> np.ndarray:
    """Vectorised evaluation at the rows of ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != p.nvars:
        raise ValueError(f"points have {points.shape[1]} columns, expected {p.nvars}")
    out = np.zeros(points.shape[0])
    for alpha, c in p._terms.items():
        out += c * np.prod(points ** np.asarray(alpha), axis=1)
    return out


def eliminate_last_variable(p: Polynomial) -> Polynomial:
    """Substitute ``x_n = 1 - (x_1 + ... + x_{n-1})``.

    The result has ``nvars - 1`` variables and agrees with ``p`` on the
    hyperplane ``sum(x) = 1``.
    """
    n = p.nvars
    if n < 2:
        raise ValueError("need at least two variables to eliminate one")
    m = n - 1
    slack = Polynomial.constant(1.0, m) - sum(
        (Polynomial.variable(i, m) for i in range(m)), Polynomial(m)
    )
    slack_powers = {0: Polynomial.constant(1.0, m)}
    out = Polynomial(m)
    for alpha, c in p._terms.items():
        k = alpha[-1]
        if k not in slack_powers:
            slack_powers[k] = slack ** k
        out = out + Polynomial(m, {alpha[:-1]: c}) * slack_powers[k]
    return out


def coefficient_vector(p: Polynomial, basis: MonomialBasis) -> np.ndarray:
    if p.nvars != basis.nvars:
        raise ValueError(f"variable count mismatch: {p.nvars} vs {basis.nvars}")
    if p.degree > basis.degree:
        raise ValueError(f"polynomial degree {p.degree} exceeds basis degree {basis.degree}")
    v = np.zeros(len(basis))
    for alpha, c in p._terms.items():
        v[basis.index(alpha)] = c
    return v


def polynomial_from_vector(v: Sequence[float], basis: MonomialBasis) -> Polynomial:
    v = np.asarray(v, dtype=float)
    if v.shape != (len(basis),):
        raise ValueError(f"vector has shape {v.shape}, basis has {len(basis)} entries")
    return Polynomial(basis.nvars, zip(basis.exponents, v))


class Tms:
    """Truncated moment sequence ``y = (y_alpha)`` over ``N^nvars_degree``.

    ``values`` follow :func:`monomial_basis` order, so ``values[0]`` is
    ``y_0`` and ``values[1:nvars + 1]`` are the first-order moments.
    """

    __slots__ = ("nvars", "degree", "values", "basis")

    def __init__(self, nvars: int, degree: int, values: Sequence[float]):
        self.basis = monomial_basis(nvars, degree)
        values = np.array(values, dtype=float)
        if values.shape != (len(self.basis),):
            raise ValueError(
                f"tms of degree {degree} in {nvars} variables needs {len(self.basis)} "
                f"values, got shape {values.shape}"
            )
        values.setflags(write=False)
        self.nvars = nvars
        self.degree = degree
        self.values = values

    def __getitem__(self, alpha: Sequence[int]) -> float:
        return float(self.values[self.basis.index(alpha)])

    def __len__(self) -> int:
        return len(self.values)

    def first_moments(self) -> np.ndarray:
        return np.array(self.values[1:self.nvars + 1])

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def __repr__(self) -> str:
        return f"Tms(nvars={self.nvars}, degree={self.degree}, y0={self.values[0]:.6g})"


def monomial_vector(point: Sequence[float], degree: int) -> Tms:
    """The moment vector ``[u]_degree`` of the point mass at ``point``."""
    point = np.asarray(point, dtype=float)
    if point.ndim != 1 or point.size < 1:
        raise ValueError("point must be a nonempty 1-d sequence")
    basis = monomial_basis(point.size, degree)
    values = np.prod(point[None, :] ** basis.array, axis=1)
    return Tms(point.size, degree, values)


def riesz_pairing(p: Polynomial, y: Tms) -> float:
    """``<p, y> = sum_alpha p_alpha y_alpha``."""
    if p.nvars != y.nvars:
        raise ValueError(f"variable count mismatch: {p.nvars} vs {y.nvars}")
    if p.degree > y.degree:
        raise ValueError(f"polynomial degree {p.degree} exceeds tms degree {y.degree}")
    return float(sum(c * y.values[y.basis.index(a)] for a, c in p._terms.items()))


def monomial_norm(point: Sequence[float], degree: int) -> float:
    """Euclidean norm of ``[u]_degree`` (includes the leading 1)."""
    return monomial_vector(point, degree).norm()


def all_exponents(nvars: int, degree: int) -> Iterable[Exponent]:
    """Exponents of total degree <= degree, unordered; for brute-force checks."""
    return (a for a in itertools.product(range(degree + 1), repeat=nvars) if sum(a) <= degree)
