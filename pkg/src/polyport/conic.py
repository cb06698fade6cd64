"""Conic programs over PSD blocks and a second-order cone, and their solver.

The moment relaxations solved here have the form::

    minimize    <c, y> + eps * t
    subject to  y[eq_index] = eq_rhs
                L_b[y] >= 0            (one PSD block per LinearMatrixMap)
                (t, y) in SOC          t >= ||y||

They are handed to :func:`conelp`, a primal-dual interior-point method on the
homogeneous self-dual embedding of the standard pair::

    (P)  minimize c'x   s.t. G x + s = h,  A x = b,  s in K
    (D)  maximize -h'z - b'w   s.t. G'z + A'w + c = 0,  z in K

with Nesterov-Todd scaling and a Mehrotra predictor-corrector.  The embedding
lets the solver return certificates of primal infeasibility and unboundedness
instead of stalling.  Everything is dense; the largest instances of interest
have under a hundred variables.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .moments import LinearMatrixMap, apply
from .polynomials import Polynomial, Tms, monomial_basis

log = logging.getLogger(__name__)

STEP_FRACTION = 0.99
SIGMA_EXPONENT = 3
MAX_REFINEMENT_STEPS = 8


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_UNBOUNDED = "PrimalUnbounded"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SolverSettings:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iter: int = 200

    def __post_init__(self):
        if not (self.gap_tol > 0 and self.feas_tol > 0):
            raise ValueError("solver tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


# --------------------------------------------------------------------------
# standard-form cone LP
# --------------------------------------------------------------------------

@dataclass
class ConeBlock:
    """One cone factor of ``G x + s = h``.

    ``kind`` is ``"s"`` (PSD, ``dim`` x ``dim`` matrices stored as full
    row-major vectors) or ``"q"`` (second-order cone of length ``dim``).
    ``G`` has shape ``(vector length, nx)``.
    """

    kind: str
    dim: int
    G: np.ndarray
    h: np.ndarray

    @property
    def length(self) -> int:
        return self.dim * self.dim if self.kind == "s" else self.dim

    @property
    def degree(self) -> int:
        return self.dim if self.kind == "s" else 1


def _identity(block: ConeBlock) -> np.ndarray:
    if block.kind == "s":
        return np.eye(block.dim).ravel()
    e = np.zeros(block.dim)
    e[0] = 1.0
    return e


def _min_eig(block: ConeBlock, v: np.ndarray) -> float:
    """Smallest 'eigenvalue' of ``v``; positive iff ``v`` is interior."""
    if block.kind == "s":
        mat = v.reshape(block.dim, block.dim)
        return float(np.linalg.eigvalsh(0.5 * (mat + mat.T))[0])
    return float(v[0] - np.linalg.norm(v[1:]))


class _PsdScaling:
    """Nesterov-Todd scaling ``W(Z) = R' Z R`` with ``W(Z) = W^{-T}(S) = diag(lam)``."""

    def __init__(self, dim: int, s: np.ndarray, z: np.ndarray):
        self.dim = dim
        S = s.reshape(dim, dim)
        Z = z.reshape(dim, dim)
        Ls = np.linalg.cholesky(0.5 * (S + S.T))
        Lz = np.linalg.cholesky(0.5 * (Z + Z.T))
        U, lam, Vt = np.linalg.svd(Lz.T @ Ls)
        self.lam = lam
        isq = 1.0 / np.sqrt(lam)
        self.R = Ls @ Vt.T * isq  # columns scaled
        self.Rinv = (U * isq).T @ Lz.T

    def lam_vec(self) -> np.ndarray:
        return np.diag(self.lam).ravel()

    def scale(self, z: np.ndarray) -> np.ndarray:
        """``W z``."""
        Z = z.reshape(self.dim, self.dim)
        return (self.R.T @ Z @ self.R).ravel()

    def unscale_s(self, v: np.ndarray) -> np.ndarray:
        """``W^T v`` (maps a scaled primal direction back)."""
        V = v.reshape(self.dim, self.dim)
        return (self.R @ V @ self.R.T).ravel()

    def unscale_z(self, v: np.ndarray) -> np.ndarray:
        """``W^{-1} v``."""
        V = v.reshape(self.dim, self.dim)
        return (self.Rinv.T @ V @ self.Rinv).ravel()

    def inv_t(self, v: np.ndarray) -> np.ndarray:
        """``W^{-T} v``."""
        V = v.reshape(self.dim, self.dim)
        return (self.Rinv @ V @ self.Rinv.T).ravel()

    def inv_t_columns(self, G: np.ndarray) -> np.ndarray:
        k = self.dim
        stack = G.T.reshape(-1, k, k)
        out = self.Rinv @ stack @ self.Rinv.T
        return out.reshape(G.shape[1], k * k).T

    # Jordan algebra in the scaled space, where lam is diagonal
    def lam_sq(self) -> np.ndarray:
        return np.diag(self.lam ** 2).ravel()

    def lam_div(self, r: np.ndarray) -> np.ndarray:
        """Solve ``lam o x = r`` for symmetric ``x``."""
        Rm = r.reshape(self.dim, self.dim)
        Rm = 0.5 * (Rm + Rm.T)
        return (2.0 * Rm / (self.lam[:, None] + self.lam[None, :])).ravel()

    def max_step(self, d: np.ndarray) -> float:
        D = d.reshape(self.dim, self.dim)
        isq = 1.0 / np.sqrt(self.lam)
        M = isq[:, None] * (0.5 * (D + D.T)) * isq[None, :]
        lo = np.linalg.eigvalsh(M)[0]
        return np.inf if lo >= 0 else -1.0 / lo


def _jordan_prod(block: ConeBlock, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    if block.kind == "s":
        U = u.reshape(block.dim, block.dim)
        V = v.reshape(block.dim, block.dim)
        return (0.5 * (U @ V + V @ U)).ravel()
    out = np.empty_like(u)
    out[0] = u @ v
    out[1:] = u[0] * v[1:] + v[0] * u[1:]
    return out


class _SocScaling:
    """Nesterov-Todd scaling for a second-order cone, ``W = beta * Wbar`` (symmetric)."""

    def __init__(self, dim: int, s: np.ndarray, z: np.ndarray):
        self.dim = dim
        sj = s[0] ** 2 - s[1:] @ s[1:]
        zj = z[0] ** 2 - z[1:] @ z[1:]
        if sj <= 0 or zj <= 0 or s[0] <= 0 or z[0] <= 0:
            raise np.linalg.LinAlgError("iterate left the second-order cone")
        sb = s / np.sqrt(sj)
        zb = z / np.sqrt(zj)
        gamma = np.sqrt(0.5 * (1.0 + sb @ zb))
        wb = sb.copy()
        wb[0] += zb[0]
        wb[1:] -= zb[1:]
        wb /= 2.0 * gamma
        beta = (sj / zj) ** 0.25
        w0, w1 = wb[0], wb[1:]
        Wbar = np.empty((dim, dim))
        Wbar[0, 0] = w0
        Wbar[0, 1:] = w1
        Wbar[1:, 0] = w1
        Wbar[1:, 1:] = np.eye(dim - 1) + np.outer(w1, w1) / (1.0 + w0)
        J = np.ones(dim)
        J[1:] = -1.0
        self.W = beta * Wbar
        self.Winv = (J[:, None] * Wbar * J[None, :]) / beta
        self.lam = self.W @ z

    def lam_vec(self) -> np.ndarray:
        return self.lam

    def scale(self, z):
        return self.W @ z

    def unscale_s(self, v):
        return self.W @ v

    def unscale_z(self, v):
        return self.Winv @ v

    def inv_t(self, v):
        return self.Winv @ v

    def inv_t_columns(self, G):
        return self.Winv @ G

    def lam_sq(self):
        lam = self.lam
        out = np.empty_like(lam)
        out[0] = lam @ lam
        out[1:] = 2.0 * lam[0] * lam[1:]
        return out

    def lam_div(self, r):
        l0, l1 = self.lam[0], self.lam[1:]
        x = np.empty_like(r)
        x[0] = (l0 * r[0] - l1 @ r[1:]) / (l0 ** 2 - l1 @ l1)
        x[1:] = (r[1:] - x[0] * l1) / l0
        return x

    def max_step(self, d):
        return _soc_max_step(self.lam, d)


def _soc_max_step(v: np.ndarray, d: np.ndarray) -> float:
    """Largest ``a`` with ``v + a d`` in the cone, for interior ``v``."""
    qa = d[0] ** 2 - d[1:] @ d[1:]
    qb = 2.0 * (v[0] * d[0] - v[1:] @ d[1:])
    qc = v[0] ** 2 - v[1:] @ v[1:]
    roots = []
    if abs(qa) <= 1e-15 * max(1.0, abs(qb), abs(qc)):
        if qb < 0:
            roots.append(-qc / qb)
    else:
        disc = qb * qb - 4.0 * qa * qc
        if disc >= 0:
            sq = np.sqrt(disc)
            q = -0.5 * (qb + np.copysign(sq, qb))
            for r in (q / qa, qc / q if q != 0 else np.inf):
                if r > 0:
                    roots.append(r)
    # also stay on the t >= 0 sheet
    if d[0] < 0:
        roots.append(-v[0] / d[0])
    return min(roots) if roots else np.inf


@dataclass
class ConeLPResult:
    status: Status
    x: np.ndarray
    s: np.ndarray
    z: np.ndarray
    w: np.ndarray  # equality multipliers
    primal_objective: float
    dual_objective: float
    gap: float
    relative_gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    history: list = field(default_factory=list)


def _split(blocks: Sequence[ConeBlock], v: np.ndarray) -> list[np.ndarray]:
    out, i = [], 0
    for b in blocks:
        out.append(v[i:i + b.length])
        i += b.length
    return out


def _initial_shift(blocks, v):
    """Shift ``v`` into the cone interior along the identity, as needed."""
    parts = _split(blocks, v)
    lo = min(_min_eig(b, p) for b, p in zip(blocks, parts))
    if lo > 1e-8 * max(np.linalg.norm(v), 1.0):
        return v
    return v + (1.0 + max(0.0, -lo)) * np.concatenate([_identity(b) for b in blocks])


def conelp(c, blocks: Sequence[ConeBlock], A, b, settings: SolverSettings | None = None) -> ConeLPResult:
    """Solve ``min c'x s.t. G x + s = h, A x = b, s in K`` (see module docstring)."""
    settings = settings or SolverSettings()
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float)).reshape(-1, c.size)
    b = np.asarray(b, dtype=float).reshape(-1)
    G = np.vstack([blk.G for blk in blocks])
    h = np.concatenate([blk.h for blk in blocks])
    nx, p = c.size, b.size
    theta = sum(blk.degree for blk in blocks)
    resx0 = max(1.0, np.linalg.norm(c))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, np.linalg.norm(h))

    def kkt_factor(Cblocks):
        """Factor ``[H A'; A 0]`` with ``H = sum C'C``; returns a solver."""
        C = np.vstack(Cblocks)
        H = C.T @ C
        scale = max(1.0, np.abs(np.diag(H)).max())
        for reg in (0.0, 1e-14, 1e-12, 1e-10):
            try:
                cf = sla.cho_factor(H + reg * scale * np.eye(nx), lower=True, check_finite=False)
                break
            except (np.linalg.LinAlgError, sla.LinAlgError):
                continue
        else:
            raise np.linalg.LinAlgError("reduced KKT matrix is not positive definite")
        if p:
            HiAt = sla.cho_solve(cf, A.T, check_finite=False)
            S = A @ HiAt
            Sf = sla.cho_factor(S, lower=True, check_finite=False)

        def reduced(bx, by, bz_scaled):
            r1 = bx + C.T @ bz_scaled
            u = sla.cho_solve(cf, r1, check_finite=False)
            if p:
                dy = sla.cho_solve(Sf, A @ u - by, check_finite=False)
                dx = u - HiAt @ dy
            else:
                dy = np.zeros(0)
                dx = u
            return dx, dy, C @ dx - bz_scaled

        def solve(bx, by, bz_scaled):
            """``bz_scaled = W^{-T} bz``; returns ``(dx, dy, W dz)``.

            Solves ``A'dy + C'u = bx, A dx = by, C dx - u = bz_scaled`` with
            iterative refinement on the unreduced system.
            """
            dx, dy, u = reduced(bx, by, bz_scaled)
            prev = np.inf
            for _ in range(MAX_REFINEMENT_STEPS):
                e1 = bx - A.T @ dy - C.T @ u
                e2 = by - A @ dx
                e3 = bz_scaled - C @ dx + u
                err = np.sqrt(e1 @ e1 + e2 @ e2 + e3 @ e3)
                # stop once refinement no longer halves the residual
                if err == 0.0 or err > 0.5 * prev:
                    break
                prev = err
                ex, ey, eu = reduced(e1, e2, e3)
                dx, dy, u = dx + ex, dy + ey, u + eu
            return dx, dy, u

        return solve

    # starting point: least-norm primal and dual points, shifted into the cone
    Cid = [blk.G for blk in blocks]
    try:
        solve0 = kkt_factor(Cid)
    except np.linalg.LinAlgError:
        return _failure(Status.NUMERICAL_FAILURE, nx, p, G.shape[0], 0)
    x, _, wz = solve0(np.zeros(nx), b, h)
    s = _initial_shift(blocks, -wz)
    _, w, wz = solve0(-c, np.zeros(p), np.zeros(h.size))
    z = _initial_shift(blocks, wz)
    tau, kappa = 1.0, 1.0
    history = []

    status = Status.MAX_ITERATIONS
    it = 0
    pres = dres = np.inf
    pcost = dcost = np.nan
    gap = relgap = np.inf
    for it in range(settings.max_iter + 1):
        rx = A.T @ w + G.T @ z + c * tau
        ry = b * tau - A @ x
        rz = h * tau - G @ x - s
        rt = -c @ x - b @ w - h @ z - kappa
        cx, byz = c @ x, b @ w + h @ z
        pcost = cx / tau
        dcost = -byz / tau
        gap = (s @ z) / tau ** 2
        # residuals relative to the size of the terms that produce them
        Gx = G @ x
        pres = max(
            np.linalg.norm(ry) / max(resy0 * tau, np.linalg.norm(A @ x)),
            np.linalg.norm(rz) / max(resz0 * tau, np.linalg.norm(Gx), np.linalg.norm(s)),
        )
        dres = np.linalg.norm(rx) / max(resx0 * tau, np.linalg.norm(G.T @ z), np.linalg.norm(A.T @ w))
        relgap = max(abs(pcost - dcost), gap) / (1.0 + abs(pcost))
        mu = (s @ z + tau * kappa) / (theta + 1)
        history.append((it, pcost, dcost, gap, pres, dres, tau, kappa))
        log.debug("it %3d pcost % .8e dcost % .8e gap %.2e pres %.2e dres %.2e tau %.2e kap %.2e",
                  *history[-1])

        if pres <= settings.feas_tol and dres <= settings.feas_tol and relgap <= settings.gap_tol:
            status = Status.OPTIMAL
            break
        if byz < 0:
            pinf = np.linalg.norm(A.T @ w + G.T @ z) / resx0 / (-byz)
            if pinf <= settings.feas_tol:
                status = Status.INFEASIBLE
                break
        if cx < 0:
            dinf = max(np.linalg.norm(A @ x) / resy0, np.linalg.norm(G @ x + s) / resz0) / (-cx)
            if dinf <= settings.feas_tol:
                status = Status.PRIMAL_UNBOUNDED
                break
        if it == settings.max_iter:
            break

        try:
            scal = [(_PsdScaling if blk.kind == "s" else _SocScaling)(blk.dim, sp, zp)
                    for blk, sp, zp in zip(blocks, _split(blocks, s), _split(blocks, z))]
            Cblocks = [sc.inv_t_columns(blk.G) for sc, blk in zip(scal, blocks)]
            solve = kkt_factor(Cblocks)
        except np.linalg.LinAlgError as exc:
            log.debug("numerical failure at iteration %d: %s", it, exc)
            status = Status.NUMERICAL_FAILURE
            break

        hs = np.concatenate([sc.inv_t(hp) for sc, hp in zip(scal, _split(blocks, h))])
        rzs = np.concatenate([sc.inv_t(rp) for sc, rp in zip(scal, _split(blocks, rz))])
        x2, w2, wz2 = solve(-c, b, hs)
        denom2 = kappa / tau + wz2 @ wz2
        ident_vec = [_identity(blk) for blk in blocks]

        def newton(rc_blocks, rct):
            qs = [sc.lam_div(r) for sc, r in zip(scal, rc_blocks)]
            qs_cat = np.concatenate(qs)
            x1, w1, wz1 = solve(-rx, ry, rzs - qs_cat)
            z1 = np.concatenate([sc.unscale_z(v) for sc, v in zip(scal, _split(blocks, wz1))])
            z2 = np.concatenate([sc.unscale_z(v) for sc, v in zip(scal, _split(blocks, wz2))])
            dtau = (-rt + c @ x1 + b @ w1 + h @ z1 + rct / tau) / denom2
            dx = x1 + dtau * x2
            dw = w1 + dtau * w2
            wdz = wz1 + dtau * wz2
            dz = z1 + dtau * z2
            # primal step from the linearised equality row keeps rz exact
            ds = h * dtau - G @ dx + rz
            dss = np.concatenate([sc.inv_t(v) for sc, v in zip(scal, _split(blocks, ds))])
            dkappa = (rct - kappa * dtau) / tau
            return dx, dw, dz, ds, wdz, dss, dtau, dkappa

        def max_step(wdz, dss, dtau, dkappa):
            a = np.inf
            for sc, dzp, dsp in zip(scal, _split(blocks, wdz), _split(blocks, dss)):
                a = min(a, sc.max_step(dzp), sc.max_step(dsp))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        rc_aff = [-sc.lam_sq() for sc in scal]
        try:
            aff = newton(rc_aff, -tau * kappa)
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.debug("numerical failure in predictor: %s", exc)
            status = Status.NUMERICAL_FAILURE
            break
        a_aff = min(1.0, max_step(*aff[4:]))
        sigma = (1.0 - a_aff) ** SIGMA_EXPONENT

        # corrector
        rc = []
        for blk, sc, dzp, dsp, e in zip(blocks, scal, _split(blocks, aff[4]),
                                        _split(blocks, aff[5]), ident_vec):
            rc.append(-sc.lam_sq() - _jordan_prod(blk, dsp, dzp) + sigma * mu * e)
        rct = -tau * kappa - aff[6] * aff[7] + sigma * mu
        try:
            dx, dw, dz, ds, wdz, dss, dtau, dkappa = newton(rc, rct)
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.debug("numerical failure in corrector: %s", exc)
            status = Status.NUMERICAL_FAILURE
            break
        alpha = min(1.0, STEP_FRACTION * max_step(wdz, dss, dtau, dkappa))
        if not np.isfinite(alpha) or alpha < 1e-12:
            status = Status.NUMERICAL_FAILURE
            break

        x = x + alpha * dx
        w = w + alpha * dw
        z = z + alpha * dz
        s = s + alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa
        # keep iterates exactly symmetric
        s = _symmetrize(blocks, s)
        z = _symmetrize(blocks, z)

    if status in (Status.OPTIMAL, Status.MAX_ITERATIONS, Status.NUMERICAL_FAILURE):
        xs, ss, zs, ws = x / tau, s / tau, z / tau, w / tau
    else:
        # certificates are reported unnormalised
        xs, ss, zs, ws = x, s, z, w
    return ConeLPResult(
        status=status, x=xs, s=ss, z=zs, w=ws,
        primal_objective=float(pcost), dual_objective=float(dcost),
        gap=float(gap), relative_gap=float(relgap),
        primal_residual=float(pres), dual_residual=float(dres),
        iterations=it, history=history,
    )


def _symmetrize(blocks, v):
    parts = []
    for blk, part in zip(blocks, _split(blocks, v)):
        if blk.kind == "s":
            M = part.reshape(blk.dim, blk.dim)
            part = (0.5 * (M + M.T)).ravel()
        parts.append(part)
    return np.concatenate(parts)


def _failure(status, nx, p, nz, it):
    nan = float("nan")
    return ConeLPResult(status, np.full(nx, np.nan), np.full(nz, np.nan), np.full(nz, np.nan),
                        np.full(p, np.nan), nan, nan, nan, nan, nan, nan, it)


# --------------------------------------------------------------------------
# moment programs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConicProgram:
    """``min <c, y> + epsilon ||y||`` over PSD-constrained moment vectors.

    ``block_polys[i]`` is the polynomial whose localizing map is
    ``psd_blocks[i]`` (1 for the moment matrix); it is only used to rebuild SOS
    certificates.
    """

    nvars: int
    degree: int
    c: np.ndarray
    epsilon: float
    psd_blocks: tuple[LinearMatrixMap, ...]
    block_polys: tuple[Polynomial, ...] = ()
    eq_index: int = 0
    eq_rhs: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "c", c)
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if c.shape != (self.m,):
            raise ValueError(f"c has shape {c.shape}, expected ({self.m},)")
        for blk in self.psd_blocks:
            if blk.max_position >= self.m:
                raise ValueError(f"psd block references position {blk.max_position} >= m={self.m}")
        if self.block_polys and len(self.block_polys) != len(self.psd_blocks):
            raise ValueError("block_polys must match psd_blocks")
        if not 0 <= self.eq_index < self.m:
            raise ValueError("eq_index out of range")

    @property
    def m(self) -> int:
        return len(monomial_basis(self.nvars, self.degree))

    def objective(self, y: np.ndarray) -> float:
        return float(self.c @ y + self.epsilon * np.linalg.norm(y))

    def standard_form(self):
        """``(c, blocks, A, b)`` for :func:`conelp`; ``x = (y, t)`` when epsilon > 0."""
        m = self.m
        with_soc = self.epsilon > 0
        nx = m + 1 if with_soc else m
        cvec = np.zeros(nx)
        cvec[:m] = self.c
        blocks = []
        for blk in self.psd_blocks:
            stack = blk.dense_stack(m)  # (m, s, s)
            Gb = np.zeros((blk.size * blk.size, nx))
            Gb[:, :m] = -stack.reshape(m, -1).T
            blocks.append(ConeBlock("s", blk.size, Gb, np.zeros(blk.size * blk.size)))
        if with_soc:
            cvec[m] = self.epsilon
            Gq = np.zeros((m + 1, nx))
            Gq[0, m] = -1.0
            Gq[1:, :m] = -np.eye(m)
            blocks.append(ConeBlock("q", m + 1, Gq, np.zeros(m + 1)))
        A = np.zeros((1, nx))
        A[0, self.eq_index] = 1.0
        return cvec, blocks, A, np.array([self.eq_rhs])


@dataclass
class ConicSolution:
    status: Status
    y: Tms
    t: float
    objective: float
    dual_objective: float
    gram: list[np.ndarray]  # PSD dual matrices, one per psd block
    soc_dual: tuple[float, np.ndarray]  # (eta, q coefficient vector)
    gamma: float  # equality multiplier, the SOS lower bound
    gap: float
    iterations: int
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    ray: np.ndarray | None = None  # improving direction when PrimalUnbounded

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL


def solve(prog: ConicProgram, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve a moment program; see :class:`ConicProgram`."""
    settings = settings or SolverSettings()
    c, blocks, A, b = prog.standard_form()
    res = conelp(c, blocks, A, b, settings)
    m = prog.m
    grams = []
    psd_blocks = blocks[:len(prog.psd_blocks)]
    zparts = _split(blocks, res.z)
    for blk, zp in zip(psd_blocks, zparts):
        grams.append(zp.reshape(blk.dim, blk.dim).copy())
    if prog.epsilon > 0:
        zq = zparts[-1]
        soc_dual = (float(zq[0]), zq[1:].copy())
        t = float(res.x[m])
    else:
        soc_dual = (0.0, np.zeros(m))
        t = float(np.linalg.norm(res.x[:m]))
    y = res.x[:m]
    ray = None
    if res.status == Status.PRIMAL_UNBOUNDED:
        ray = y / max(np.linalg.norm(y), 1e-300)
    if res.status == Status.OPTIMAL:
        objective = prog.objective(y) if prog.epsilon == 0 else float(prog.c @ y + prog.epsilon * t)
    else:
        objective = float(res.primal_objective)
    return ConicSolution(
        status=res.status,
        y=Tms(prog.nvars, prog.degree, y if np.all(np.isfinite(y)) else np.zeros(m)),
        t=t,
        objective=objective,
        dual_objective=float(res.dual_objective),
        gram=grams,
        soc_dual=soc_dual,
        gamma=float(-res.w[0]) if res.w.size else float("nan"),
        gap=float(res.relative_gap),
        iterations=res.iterations,
        primal_residual=res.primal_residual,
        dual_residual=res.dual_residual,
        ray=ray,
    )


@dataclass
class SosCertificate:
    """``f - q - gamma = sigma_0 + sum_i g_i sigma_i`` with ``sigma_i = [x]' G_i [x]``."""

    gamma: float
    q: Polynomial
    gram: list[np.ndarray]
    sos: list[Polynomial]
    residual: float  # coefficient norm of the identity's mismatch
    q_norm: float


def gram_polynomial(G: np.ndarray, nvars: int) -> Polynomial:
    """``[x]_k' G [x]_k`` for a Gram matrix over the degree-k basis."""
    k = 0
    while len(monomial_basis(nvars, k)) < G.shape[0]:
        k += 1
    basis = monomial_basis(nvars, k)
    if len(basis) != G.shape[0]:
        raise ValueError(f"Gram matrix of size {G.shape[0]} does not match a monomial basis")
    terms = []
    for a, alpha in enumerate(basis):
        for b_, beta in enumerate(basis):
            terms.append((tuple(i + j for i, j in zip(alpha, beta)), G[a, b_]))
    return Polynomial(nvars, terms)


def recover_sos_certificate(prog: ConicProgram, sol: ConicSolution) -> SosCertificate:
    """Read the SOS certificate off the dual solution and verify it by polynomial arithmetic."""
    if sol.status != Status.OPTIMAL:
        raise ValueError(f"no certificate for a {sol.status.value} solution")
    if not prog.block_polys:
        raise ValueError("program carries no block polynomials; cannot rebuild the certificate")
    basis = monomial_basis(prog.nvars, prog.degree)
    f = Polynomial(prog.nvars, zip(basis.exponents, prog.c))
    q = Polynomial(prog.nvars, zip(basis.exponents, sol.soc_dual[1]))
    sos = [gram_polynomial(G, prog.nvars) for G in sol.gram]
    rhs = Polynomial(prog.nvars)
    for g, sigma in zip(prog.block_polys, sos):
        rhs = rhs + g * sigma
    lhs = f - q - sol.gamma
    diff = lhs - rhs
    residual = float(np.linalg.norm(list(diff.terms.values()))) if len(diff) else 0.0
    return SosCertificate(
        gamma=sol.gamma, q=q, gram=[G.copy() for G in sol.gram], sos=sos,
        residual=residual, q_norm=float(np.linalg.norm(sol.soc_dual[1])),
    )


def apply_blocks(prog: ConicProgram, y: np.ndarray) -> list[np.ndarray]:
    return [apply(blk, y) for blk in prog.psd_blocks]
