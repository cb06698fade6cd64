"""Moment and localizing matrices as linear maps of a truncated moment sequence.

A :class:`LinearMatrixMap` stores, for each upper-triangular entry ``(a, b)``
of an ``s x s`` symmetric matrix, the sparse list of ``(tms position, weight)``
pairs that produce it.  Because the graded basis of degree ``D`` is a prefix
of the basis of any higher degree, a map built for degree ``2k`` applies to
every tms of degree ``>= 2k``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import ceil
from typing import Sequence

import numpy as np

from .polynomials import Polynomial, Tms, monomial_basis

PSD_RTOL = 1e-8


@dataclass(frozen=True)
class LinearMatrixMap:
    """Sparse linear map ``y -> sum_j y_j A_j`` onto ``size x size`` symmetric matrices.

    ``rows[i] <= cols[i]`` for every stored triple; entry ``(rows[i], cols[i])``
    receives ``weights[i] * y[positions[i]]`` and is mirrored below the diagonal.
    """

    size: int
    rows: np.ndarray
    cols: np.ndarray
    positions: np.ndarray
    weights: np.ndarray
    degree: int  # highest total degree referenced

    @property
    def max_position(self) -> int:
        return int(self.positions.max()) if self.positions.size else -1

    def apply(self, y: Tms | np.ndarray) -> np.ndarray:
        return apply(self, y)

    def dense_stack(self, m: int) -> np.ndarray:
        """The coefficient matrices ``A_j`` as an ``(m, size, size)`` array."""
        if self.max_position >= m:
            raise ValueError(f"map references position {self.max_position} >= {m}")
        stack = np.zeros((m, self.size, self.size))
        np.add.at(stack, (self.positions, self.rows, self.cols), self.weights)
        off = self.rows != self.cols
        np.add.at(stack, (self.positions[off], self.cols[off], self.rows[off]), self.weights[off])
        return stack

    def entry(self, a: int, b: int) -> dict[int, float]:
        """``{tms position: weight}`` for matrix entry ``(a, b)``."""
        a, b = min(a, b), max(a, b)
        sel = (self.rows == a) & (self.cols == b)
        out: dict[int, float] = {}
        for p, w in zip(self.positions[sel], self.weights[sel]):
            out[int(p)] = out.get(int(p), 0.0) + float(w)
        return out


def localizing_map(q: Polynomial, k: int, nvars: int | None = None) -> LinearMatrixMap:
    """The order-``k`` localizing matrix ``L_q^(k)[y]`` as a linear map.

    Entry ``(alpha, beta)`` over the basis of degree ``k - ceil(deg q / 2)`` is
    ``sum_gamma q_gamma y_{alpha + beta + gamma}``.  ``q = 1`` gives the moment
    matrix ``M_k[y]``.
    """
    nvars = q.nvars if nvars is None else nvars
    if q.nvars != nvars:
        raise ValueError(f"polynomial has {q.nvars} variables, expected {nvars}")
    t0 = ceil(q.degree / 2)
    if k < t0:
        raise ValueError(f"order k={k} too small for a degree-{q.degree} polynomial")
    rowbasis = monomial_basis(nvars, k - t0)
    ybasis = monomial_basis(nvars, 2 * k)
    s = len(rowbasis)
    rows, cols, pos, wts = [], [], [], []
    qterms = list(q.terms.items())
    for a in range(s):
        alpha = rowbasis[a]
        for b in range(a, s):
            ab = tuple(i + j for i, j in zip(alpha, rowbasis[b]))
            for gamma, c in qterms:
                rows.append(a)
                cols.append(b)
                pos.append(ybasis.index(tuple(i + j for i, j in zip(ab, gamma))))
                wts.append(c)
    return LinearMatrixMap(
        size=s,
        rows=np.array(rows, dtype=np.int64),
        cols=np.array(cols, dtype=np.int64),
        positions=np.array(pos, dtype=np.int64),
        weights=np.array(wts, dtype=float),
        degree=2 * k,
    )


def moment_map(k: int, nvars: int) -> LinearMatrixMap:
    return localizing_map(Polynomial.constant(1.0, nvars), k, nvars)


def apply(lmap: LinearMatrixMap, y: Tms | np.ndarray) -> np.ndarray:
    values = y.values if isinstance(y, Tms) else np.asarray(y, dtype=float)
    if lmap.max_position >= len(values):
        raise ValueError(f"tms has {len(values)} entries, map needs {lmap.max_position + 1}")
    mat = np.zeros((lmap.size, lmap.size))
    np.add.at(mat, (lmap.rows, lmap.cols), lmap.weights * values[lmap.positions])
    upper = np.triu(mat, 1)
    return np.diag(np.diag(mat)) + upper + upper.T


def psd_margin(mat: np.ndarray) -> tuple[bool, float]:
    """PSD test with a scale-relative tolerance; returns ``(is_psd, min eigenvalue)``."""
    if mat.size == 0:
        return True, 0.0
    eig = np.linalg.eigvalsh(mat)
    lo = float(eig[0])
    return lo >= -PSD_RTOL * (1.0 + float(np.abs(eig).max())), lo


def membership_S(g: Sequence[Polynomial], k: int, y: Tms) -> tuple[bool, float]:
    """Whether ``y`` lies in the cone cut out by ``M_k[y] >= 0`` and ``L_{g_i}^(k)[y] >= 0``.

    Returns the verdict and the smallest eigenvalue across the required matrices.
    """
    ok, margin = psd_margin(apply(moment_map(k, y.nvars), y))
    for gi in g:
        ok_i, m_i = psd_margin(apply(localizing_map(gi, k, y.nvars), y))
        ok &= ok_i
        margin = min(margin, m_i)
    return ok, margin
