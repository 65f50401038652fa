"""Primal-dual interior-point solver for block conic programs.

Solves  min c'x  s.t.  Ax = b,  x in K,  where K is a product of dense
positive-semidefinite blocks (stored in scaled-vectorization form) and
nonnegative scalars.  The dual is  max b'y  s.t.  c - A'y = s in K.

The implementation is a Mehrotra predictor-corrector method with
Nesterov-Todd scaling.  Semidefinite blocks are vectorized so that the
Euclidean inner product of vectors equals the trace inner product of the
matrices they represent: the upper triangle is stored row by row with
off-diagonal entries multiplied by sqrt(2).

Runs of consecutive same-size PSD blocks are processed as stacked arrays
(batched cholesky/svd/eigh), which keeps per-iteration cost flat when a
program has many small identical blocks; callers that control the block
layout should keep equal-size blocks adjacent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import SolverFailure

SQRT2 = math.sqrt(2.0)

PSD = "psd"
NONNEG = "nn"


def svec_size(n: int) -> int:
    return n * (n + 1) // 2


@lru_cache(maxsize=None)
def _triu(n: int):
    """Cached upper-triangle index pattern and svec scale factors for order n."""
    r, c = np.triu_indices(n)
    pack = np.where(r == c, 1.0, SQRT2)
    for a in (r, c, pack):
        a.setflags(write=False)
    return r, c, pack


def svec(M: np.ndarray) -> np.ndarray:
    """Scaled vectorization of a symmetric matrix (row-major upper triangle)."""
    r, c, pack = _triu(M.shape[0])
    return M[r, c] * pack


def smat(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of svec."""
    r, c, pack = _triu(n)
    M = np.zeros((n, n))
    vals = v / pack
    M[r, c] = vals
    M[c, r] = vals
    return M


def skron(W: np.ndarray) -> np.ndarray:
    """Matrix of the map  svec(M) -> svec(W M W)  for symmetric W."""
    return _skron_batch(W[None])[0]


def _svec_batch(M: np.ndarray) -> np.ndarray:
    r, c, pack = _triu(M.shape[-1])
    return M[..., r, c] * pack


def _smat_batch(v: np.ndarray, n: int) -> np.ndarray:
    r, c, pack = _triu(n)
    vals = v / pack
    M = np.zeros(v.shape[:-1] + (n, n))
    M[..., r, c] = vals
    M[..., c, r] = vals
    return M


def _skron_batch(W: np.ndarray) -> np.ndarray:
    n = W.shape[-1]
    r, c, pack = _triu(n)
    Wrr = W[:, r[:, None], r[None, :]]
    Wcc = W[:, c[:, None], c[None, :]]
    Wrc = W[:, r[:, None], c[None, :]]
    Wcr = W[:, c[:, None], r[None, :]]
    H = (Wrr * Wcc + Wrc * Wcr) / 2.0
    H *= pack[:, None] * pack[None, :]
    return H


@dataclass(frozen=True)
class Cone:
    """Product cone: an ordered list of ("psd", n) and ("nn", k) blocks."""

    blocks: tuple[tuple[str, int], ...]

    def __post_init__(self):
        for kind, size in self.blocks:
            if kind not in (PSD, NONNEG):
                raise ValueError(f"unknown cone block kind {kind!r}")
            if size < 1:
                raise ValueError("cone block size must be >= 1")

    @property
    def dim(self) -> int:
        return sum(svec_size(s) if k == PSD else s for k, s in self.blocks)

    @property
    def degree(self) -> int:
        """Barrier degree nu (matrix order per PSD block, 1 per scalar)."""
        return sum(s for _, s in self.blocks)

    def slices(self) -> list[slice]:
        out, at = [], 0
        for kind, size in self.blocks:
            w = svec_size(size) if kind == PSD else size
            out.append(slice(at, at + w))
            at += w
        return out

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dim)
        for (kind, size), sl in zip(self.blocks, self.slices()):
            if kind == PSD:
                e[sl] = svec(np.eye(size))
            else:
                e[sl] = 1.0
        return e

    def groups(self) -> list[tuple[str, int, int, slice]]:
        """Consecutive same-size runs as (kind, size, count, x-slice).

        Adjacent nonnegative blocks merge regardless of length; PSD blocks
        merge only when their orders match (they become one stacked array).
        """
        out: list[tuple[str, int, int, slice]] = []
        at = 0
        for kind, size in self.blocks:
            w = svec_size(size) if kind == PSD else size
            if out and out[-1][0] == kind and (kind == NONNEG or out[-1][1] == size):
                pkind, psize, pcount, psl = out.pop()
                if kind == NONNEG:
                    out.append((kind, psize + size, 1, slice(psl.start, at + w)))
                else:
                    out.append((kind, size, pcount + 1, slice(psl.start, at + w)))
            else:
                out.append((kind, size, 1, slice(at, at + w)))
            at += w
        return out


@dataclass(frozen=True)
class SDPInstance:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cone: Cone

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        c = np.asarray(self.c, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape != (b.shape[0], c.shape[0]):
            raise ValueError(f"A is {A.shape}, expected ({b.shape[0]}, {c.shape[0]})")
        if c.shape[0] != self.cone.dim:
            raise ValueError("variable count does not match cone dimension")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class ConicSolution:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    status: str
    iterations: int
    primal_obj: float
    dual_obj: float
    gap: float
    primal_residual: float
    dual_residual: float
    dropped_rows: tuple[int, ...] = ()

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def dual_equalities(self) -> np.ndarray:
        """One multiplier per equality row (dropped dependent rows get 0)."""
        return self.y

    @property
    def duality_gap(self) -> float:
        return self.gap


def presolve_rows(A: np.ndarray, tol: float = 1e-10):
    """Split equality rows into an independent set and dependent remainder.

    Pivoted QR of A' identifies a maximal independent row subset.  Returns
    (keep, drop, B) where rows A[drop] = B @ A[keep]; B lets callers test
    right-hand-side consistency.  Dropped rows get zero dual multipliers.
    """
    m = A.shape[0]
    if m == 0:
        return np.array([], dtype=int), np.array([], dtype=int), np.zeros((0, 0))
    q, r, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    scale = diag[0] if diag.size and diag[0] > 0 else 1.0
    rank = int(np.sum(diag > tol * scale))
    keep = np.sort(piv[:rank])
    drop = np.sort(piv[rank:])
    if drop.size == 0:
        return keep, drop, np.zeros((0, rank))
    B, *_ = np.linalg.lstsq(A[keep].T, A[drop].T, rcond=None)
    return keep, drop, B.T


class _Scaling:
    """Per-iteration Nesterov-Todd scaling data, one entry per cone group."""

    def __init__(self, groups, x: np.ndarray, s: np.ndarray):
        self.groups = groups
        self.G = []      # PSD: (count, n, n) stack; nn: scaling vector w
        self.Ginv = []
        self.lam = []    # PSD: (count, n) eigenvalues; nn: vector
        self.H = []      # PSD: (count, u, u) stack; nn: vector w^2
        for kind, size, count, sl in groups:
            if kind == PSD:
                X = _smat_batch(x[sl].reshape(count, -1), size)
                S = _smat_batch(s[sl].reshape(count, -1), size)
                try:
                    Lx = np.linalg.cholesky(X)
                    Ls = np.linalg.cholesky(S)
                except np.linalg.LinAlgError as exc:
                    raise SolverFailure("iterate left the cone interior") from exc
                U, sig, Vt = np.linalg.svd(np.swapaxes(Ls, -1, -2) @ Lx)
                if np.min(sig) <= 0:
                    raise SolverFailure("singular scaling point")
                isq = 1.0 / np.sqrt(sig)
                G = (Lx @ np.swapaxes(Vt, -1, -2)) * isq[:, None, :]
                Ginv = (np.swapaxes(U, -1, -2) * isq[:, :, None]) @ np.swapaxes(Ls, -1, -2)
                self.G.append(G)
                self.Ginv.append(Ginv)
                self.lam.append(sig)
                self.H.append(_skron_batch(G @ np.swapaxes(G, -1, -2)))
            else:
                xv, sv = x[sl], s[sl]
                w = np.sqrt(xv / sv)
                self.G.append(w)
                self.Ginv.append(1.0 / w)
                self.lam.append(np.sqrt(xv * sv))
                self.H.append(w * w)

    def apply_H(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        for (kind, size, count, sl), H in zip(self.groups, self.H):
            if kind == PSD:
                V = v[sl].reshape(count, -1, 1)
                out[sl] = np.matmul(H, V).ravel()
            else:
                out[sl] = H * v[sl]
        return out

    def scale_columns(self, A: np.ndarray) -> np.ndarray:
        """A @ H for the full block-diagonal scaling operator."""
        AH = np.empty_like(A)
        m = A.shape[0]
        for (kind, size, count, sl), H in zip(self.groups, self.H):
            if kind == PSD:
                u = svec_size(size)
                Ag = np.ascontiguousarray(
                    A[:, sl].reshape(m, count, u).transpose(1, 0, 2))
                AH[:, sl] = np.matmul(Ag, H).transpose(1, 0, 2).reshape(m, -1)
            else:
                AH[:, sl] = A[:, sl] * H
        return AH

    def lam_squared(self) -> np.ndarray:
        out = np.empty(self.groups[-1][3].stop)
        for (kind, size, count, sl), lam in zip(self.groups, self.lam):
            if kind == PSD:
                D = np.zeros((count, size, size))
                idx = np.arange(size)
                D[:, idx, idx] = lam**2
                out[sl] = _svec_batch(D).ravel()
            else:
                out[sl] = lam**2
        return out

    def apply_T(self, d: np.ndarray) -> np.ndarray:
        """T(d) = G L_Lambda^{-1}(d) G' per block, in svec coordinates."""
        out = np.empty_like(d)
        it = zip(self.groups, self.G, self.lam)
        for (kind, size, count, sl), G, lam in it:
            if kind == PSD:
                D = _smat_batch(d[sl].reshape(count, -1), size)
                L = 2.0 * D / (lam[:, :, None] + lam[:, None, :])
                out[sl] = _svec_batch(G @ L @ np.swapaxes(G, -1, -2)).ravel()
            else:
                out[sl] = G * d[sl] / lam
        return out

    def scaled_directions(self, dx: np.ndarray, ds: np.ndarray):
        """Directions in the scaled space: Dx = Ginv dX Ginv', Ds = G' dS G."""
        Dx = np.empty_like(dx)
        Ds = np.empty_like(ds)
        it = zip(self.groups, self.G, self.Ginv)
        for (kind, size, count, sl), G, Ginv in it:
            if kind == PSD:
                dX = _smat_batch(dx[sl].reshape(count, -1), size)
                dS = _smat_batch(ds[sl].reshape(count, -1), size)
                Dx[sl] = _svec_batch(Ginv @ dX @ np.swapaxes(Ginv, -1, -2)).ravel()
                Ds[sl] = _svec_batch(np.swapaxes(G, -1, -2) @ dS @ G).ravel()
            else:
                Dx[sl] = dx[sl] * Ginv
                Ds[sl] = ds[sl] * G
        return Dx, Ds

    def jordan_product(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Symmetrized product (UV + VU)/2 per PSD block, elementwise for nn."""
        out = np.empty_like(u)
        for kind, size, count, sl in self.groups:
            if kind == PSD:
                U = _smat_batch(u[sl].reshape(count, -1), size)
                V = _smat_batch(v[sl].reshape(count, -1), size)
                out[sl] = _svec_batch((U @ V + V @ U) / 2.0).ravel()
            else:
                out[sl] = u[sl] * v[sl]
        return out

    def max_step(self, direction: np.ndarray) -> float:
        """Largest t keeping Lambda + t * D in the cone (scaled direction D)."""
        t = np.inf
        for (kind, size, count, sl), lam in zip(self.groups, self.lam):
            if kind == PSD:
                D = _smat_batch(direction[sl].reshape(count, -1), size)
                ih = 1.0 / np.sqrt(lam)
                E = ih[:, :, None] * D * ih[:, None, :]
                emin = float(np.min(np.linalg.eigvalsh(E)))
                if emin < 0:
                    t = min(t, -1.0 / emin)
            else:
                d = direction[sl]
                neg = d < 0
                if np.any(neg):
                    t = min(t, float(np.min(-lam[neg] / d[neg])))
        return t


def _solve_normal(M_cho, A, AH, scaling, rp, rd, t):
    rhs = rp - A @ t + AH @ rd
    dy = scipy.linalg.cho_solve(M_cho, rhs, check_finite=False)
    ds = rd - A.T @ dy
    dx = t - scaling.apply_H(ds)
    return dx, dy, ds


def _factor_normal(A: np.ndarray, scaling: _Scaling):
    AH = scaling.scale_columns(A)
    M = AH @ A.T
    M = (M + M.T) / 2.0
    jitter = 0.0
    base = max(np.trace(M) / max(M.shape[0], 1), 1.0)
    for attempt in range(4):
        try:
            return scipy.linalg.cho_factor(M + jitter * np.eye(M.shape[0]),
                                           lower=True, check_finite=False), AH
        except np.linalg.LinAlgError:
            jitter = base * 10.0 ** (-14 + 4 * attempt)
    raise SolverFailure("normal equations are numerically singular")


def solve(instance: SDPInstance, tol: float = 1e-8, max_iter: int = 100,
          presolve: bool = True) -> ConicSolution:
    """Solve the conic program to relative accuracy ``tol``.

    Infeasible start: both equality residuals shrink along iterations, so no
    initial feasible point is required.  Raises SolverFailure only on
    numerical breakdown; non-convergence is reported via ``status``.
    """
    cone = instance.cone
    A_full, b_full, c = instance.A, instance.b, instance.c
    m_full = A_full.shape[0]

    drop = np.array([], dtype=int)
    keep = np.arange(m_full)
    if presolve and m_full:
        keep, drop, B = presolve_rows(A_full)
        if drop.size:
            mismatch = np.max(np.abs(b_full[drop] - B @ b_full[keep]))
            if mismatch > 1e-7 * (1.0 + np.max(np.abs(b_full))):
                raise SolverFailure("equality constraints are inconsistent")
    A = A_full[keep]
    b = b_full[keep]
    m = A.shape[0]

    groups = cone.groups()
    nu = cone.degree
    e = cone.identity()
    x = e * max(1.0, float(np.max(np.abs(b))) if m else 1.0)
    s = e * max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
    y = np.zeros(m)

    norm_b = 1.0 + np.linalg.norm(b)
    norm_c = 1.0 + np.linalg.norm(c)

    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        rp = b - A @ x
        rd = c - A.T @ y - s
        mu = float(x @ s) / nu
        pobj = float(c @ x)
        dobj = float(b @ y)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        rp_rel = np.linalg.norm(rp) / norm_b
        rd_rel = np.linalg.norm(rd) / norm_c
        if gap <= tol and rp_rel <= tol and rd_rel <= tol:
            status = "optimal"
            break

        scaling = _Scaling(groups, x, s)
        M_cho, AH = _factor_normal(A, scaling)
        lam2 = scaling.lam_squared()

        # Predictor: pure Newton step toward complementarity zero.
        t_aff = scaling.apply_T(-lam2)
        dx_a, dy_a, ds_a = _solve_normal(M_cho, A, AH, scaling, rp, rd, t_aff)
        Dx_a, Ds_a = scaling.scaled_directions(dx_a, ds_a)
        ap = min(1.0, scaling.max_step(Dx_a))
        ad = min(1.0, scaling.max_step(Ds_a))
        mu_aff = float((x + ap * dx_a) @ (s + ad * ds_a)) / nu
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # Corrector with second-order term.
        dcomp = sigma * mu * e - lam2 - scaling.jordan_product(Dx_a, Ds_a)
        t_cor = scaling.apply_T(dcomp)
        dx, dy, ds = _solve_normal(M_cho, A, AH, scaling, rp, rd, t_cor)
        Dx, Ds = scaling.scaled_directions(dx, ds)
        eta = 0.99
        ap = min(1.0, eta * scaling.max_step(Dx))
        ad = min(1.0, eta * scaling.max_step(Ds))

        x = x + ap * dx
        y = y + ad * dy
        s = s + ad * ds

    rp = b - A @ x
    rd = c - A.T @ y - s
    pobj = float(c @ x)
    dobj = float(b @ y)
    y_full = np.zeros(m_full)
    y_full[keep] = y
    return ConicSolution(
        x=x, y=y_full, s=s, status=status, iterations=it,
        primal_obj=pobj, dual_obj=dobj,
        gap=abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj)),
        primal_residual=float(np.linalg.norm(rp) / norm_b),
        dual_residual=float(np.linalg.norm(rd) / norm_c),
        dropped_rows=tuple(int(i) for i in drop),
    )


class _BatchScaling:
    """Nesterov-Todd scaling for a batch of instances sharing one cone.

    Same algebra as ``_Scaling`` with a leading batch axis: PSD group data
    is stacked as (batch * count, n, n) so the dense LAPACK batching also
    covers the instance dimension, nonnegative groups stay (batch, k).
    """

    def __init__(self, groups, x: np.ndarray, s: np.ndarray):
        self.groups = groups
        self.nb = x.shape[0]
        self.G, self.Ginv, self.lam, self.H = [], [], [], []
        for kind, size, count, sl in groups:
            if kind == PSD:
                X = _smat_batch(x[:, sl].reshape(self.nb * count, -1), size)
                S = _smat_batch(s[:, sl].reshape(self.nb * count, -1), size)
                try:
                    Lx = np.linalg.cholesky(X)
                    Ls = np.linalg.cholesky(S)
                except np.linalg.LinAlgError as exc:
                    raise SolverFailure("iterate left the cone interior") from exc
                U, sig, Vt = np.linalg.svd(np.swapaxes(Ls, -1, -2) @ Lx)
                if np.min(sig) <= 0:
                    raise SolverFailure("singular scaling point")
                isq = 1.0 / np.sqrt(sig)
                G = (Lx @ np.swapaxes(Vt, -1, -2)) * isq[:, None, :]
                Ginv = (np.swapaxes(U, -1, -2) * isq[:, :, None]) @ np.swapaxes(Ls, -1, -2)
                self.G.append(G)
                self.Ginv.append(Ginv)
                self.lam.append(sig)
                self.H.append(_skron_batch(G @ np.swapaxes(G, -1, -2)))
            else:
                xv, sv = x[:, sl], s[:, sl]
                w = np.sqrt(xv / sv)
                self.G.append(w)
                self.Ginv.append(1.0 / w)
                self.lam.append(np.sqrt(xv * sv))
                self.H.append(w * w)

    def apply_H(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        for (kind, size, count, sl), H in zip(self.groups, self.H):
            if kind == PSD:
                V = v[:, sl].reshape(self.nb * count, -1, 1)
                out[:, sl] = np.matmul(H, V).reshape(self.nb, -1)
            else:
                out[:, sl] = H * v[:, sl]
        return out

    def scale_columns(self, A: np.ndarray) -> np.ndarray:
        """Per-member A @ H, shape (batch, m, n)."""
        m = A.shape[0]
        AH = np.empty((self.nb, m, A.shape[1]))
        for (kind, size, count, sl), H in zip(self.groups, self.H):
            if kind == PSD:
                u = svec_size(size)
                Ag = A[:, sl].reshape(m, count, u)
                Hb = H.reshape(self.nb, count, u, u)
                AH[:, :, sl] = np.einsum("mcu,bcuv->bmcv", Ag, Hb,
                                         optimize=True).reshape(self.nb, m, -1)
            else:
                AH[:, :, sl] = A[None, :, sl] * H[:, None, :]
        return AH

    def lam_squared(self) -> np.ndarray:
        out = np.empty((self.nb, self.groups[-1][3].stop))
        for (kind, size, count, sl), lam in zip(self.groups, self.lam):
            if kind == PSD:
                D = np.zeros((self.nb * count, size, size))
                idx = np.arange(size)
                D[:, idx, idx] = lam**2
                out[:, sl] = _svec_batch(D).reshape(self.nb, -1)
            else:
                out[:, sl] = lam**2
        return out

    def apply_T(self, d: np.ndarray) -> np.ndarray:
        out = np.empty_like(d)
        for (kind, size, count, sl), G, lam in zip(self.groups, self.G, self.lam):
            if kind == PSD:
                D = _smat_batch(d[:, sl].reshape(self.nb * count, -1), size)
                L = 2.0 * D / (lam[:, :, None] + lam[:, None, :])
                out[:, sl] = _svec_batch(
                    G @ L @ np.swapaxes(G, -1, -2)).reshape(self.nb, -1)
            else:
                out[:, sl] = G * d[:, sl] / lam
        return out

    def scaled_directions(self, dx: np.ndarray, ds: np.ndarray):
        Dx = np.empty_like(dx)
        Ds = np.empty_like(ds)
        for (kind, size, count, sl), G, Ginv in zip(self.groups, self.G, self.Ginv):
            if kind == PSD:
                dX = _smat_batch(dx[:, sl].reshape(self.nb * count, -1), size)
                dS = _smat_batch(ds[:, sl].reshape(self.nb * count, -1), size)
                Dx[:, sl] = _svec_batch(
                    Ginv @ dX @ np.swapaxes(Ginv, -1, -2)).reshape(self.nb, -1)
                Ds[:, sl] = _svec_batch(
                    np.swapaxes(G, -1, -2) @ dS @ G).reshape(self.nb, -1)
            else:
                Dx[:, sl] = dx[:, sl] * Ginv
                Ds[:, sl] = ds[:, sl] * G
        return Dx, Ds

    def jordan_product(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(u)
        for kind, size, count, sl in self.groups:
            if kind == PSD:
                U = _smat_batch(u[:, sl].reshape(self.nb * count, -1), size)
                V = _smat_batch(v[:, sl].reshape(self.nb * count, -1), size)
                out[:, sl] = _svec_batch((U @ V + V @ U) / 2.0).reshape(self.nb, -1)
            else:
                out[:, sl] = u[:, sl] * v[:, sl]
        return out

    def max_step(self, direction: np.ndarray) -> np.ndarray:
        """Largest per-member t keeping Lambda + t * D inside the cone."""
        t = np.full(self.nb, np.inf)
        for (kind, size, count, sl), lam in zip(self.groups, self.lam):
            if kind == PSD:
                D = _smat_batch(direction[:, sl].reshape(self.nb * count, -1), size)
                ih = 1.0 / np.sqrt(lam)
                E = ih[:, :, None] * D * ih[:, None, :]
                emin = np.linalg.eigvalsh(E)[:, 0].reshape(self.nb, count).min(axis=1)
                np.minimum(t, np.where(emin < 0, -1.0 / np.minimum(emin, -1e-300),
                                       np.inf), out=t)
            else:
                d = direction[:, sl]
                ratio = np.where(d < 0, -lam / np.where(d < 0, d, -1.0), np.inf)
                np.minimum(t, ratio.min(axis=1), out=t)
        return t


def _solve_normal_batch(L, A, AH, scaling, rp, rd, t):
    """Batched normal-equation solve; L is the (batch, m, m) Cholesky stack."""
    rhs = rp - t @ A.T + np.einsum("bmn,bn->bm", AH, rd, optimize=True)
    z = np.linalg.solve(L, rhs[:, :, None])
    dy = np.linalg.solve(np.swapaxes(L, -1, -2), z)[:, :, 0]
    ds = rd - dy @ A
    dx = t - scaling.apply_H(ds)
    return dx, dy, ds


def solve_batch(instance: SDPInstance, B: np.ndarray, tol: float = 1e-8,
                max_iter: int = 100) -> list[ConicSolution]:
    """Solve one program structure against many right-hand sides in lockstep.

    ``instance`` supplies (c, A, cone); ``B`` holds one b per row.  Members
    iterate together, converged members are frozen, and the returned list
    matches the scalar solver member for member.  No row presolve is
    applied: callers batching certificates have structurally independent
    rows.  Falls back to per-member scalar solves on numerical breakdown.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    nb, m = B.shape
    cone = instance.cone
    A, c = instance.A, instance.c
    if m != A.shape[0]:
        raise ValueError(f"B has {m} columns, A has {A.shape[0]} rows")
    if nb == 1:
        sol = solve(SDPInstance(c=c, A=A, b=B[0], cone=cone),
                    tol=tol, max_iter=max_iter, presolve=False)
        return [sol]

    groups = cone.groups()
    nu = cone.degree
    e = cone.identity()
    scale_b = np.maximum(1.0, np.max(np.abs(B), axis=1))
    x = e[None, :] * scale_b[:, None]
    s = np.tile(e * max(1.0, float(np.max(np.abs(c))) if c.size else 1.0), (nb, 1))
    y = np.zeros((nb, m))

    norm_b = 1.0 + np.linalg.norm(B, axis=1)
    norm_c = 1.0 + np.linalg.norm(c)

    done = np.zeros(nb, dtype=bool)
    it_done = np.full(nb, max_iter, dtype=int)
    try:
        for it in range(1, max_iter + 1):
            rp = B - x @ A.T
            rd = c[None, :] - y @ A - s
            mu = np.einsum("bn,bn->b", x, s) / nu
            pobj = x @ c
            dobj = np.einsum("bm,bm->b", y, B)
            gap = np.abs(pobj - dobj) / (1.0 + np.abs(pobj) + np.abs(dobj))
            rp_rel = np.linalg.norm(rp, axis=1) / norm_b
            rd_rel = np.linalg.norm(rd, axis=1) / norm_c
            newly = (gap <= tol) & (rp_rel <= tol) & (rd_rel <= tol) & ~done
            it_done[newly] = it
            done |= newly
            if np.all(done):
                break

            # Frozen members keep their iterates but contribute identity
            # scaling data, so near-complementary points cannot poison the
            # shared batched factorizations.  Their steps are zeroed below.
            if np.any(done):
                xw = np.where(done[:, None], e[None, :], x)
                sw = np.where(done[:, None], e[None, :], s)
            else:
                xw, sw = x, s
            scaling = _BatchScaling(groups, xw, sw)
            AH = scaling.scale_columns(A)
            M = AH @ A.T
            M = (M + np.swapaxes(M, -1, -2)) / 2.0
            eye = np.eye(m)
            jitter = 0.0
            base = max(float(np.max(np.trace(M, axis1=1, axis2=2))) / max(m, 1), 1.0)
            for attempt in range(4):
                try:
                    L = np.linalg.cholesky(M + jitter * eye)
                    break
                except np.linalg.LinAlgError:
                    jitter = base * 10.0 ** (-14 + 4 * attempt)
            else:
                raise SolverFailure("normal equations are numerically singular")
            lam2 = scaling.lam_squared()

            t_aff = scaling.apply_T(-lam2)
            dx_a, dy_a, ds_a = _solve_normal_batch(L, A, AH, scaling, rp, rd, t_aff)
            Dx_a, Ds_a = scaling.scaled_directions(dx_a, ds_a)
            ap = np.minimum(1.0, scaling.max_step(Dx_a))
            ad = np.minimum(1.0, scaling.max_step(Ds_a))
            mu_aff = np.einsum("bn,bn->b", x + ap[:, None] * dx_a,
                               s + ad[:, None] * ds_a) / nu
            sigma = np.clip(mu_aff / np.maximum(mu, 1e-300), 0.0, 1.0) ** 3

            dcomp = sigma[:, None] * mu[:, None] * e[None, :] - lam2 \
                - scaling.jordan_product(Dx_a, Ds_a)
            t_cor = scaling.apply_T(dcomp)
            dx, dy, ds = _solve_normal_batch(L, A, AH, scaling, rp, rd, t_cor)
            Dx, Ds = scaling.scaled_directions(dx, ds)
            eta = 0.99
            ap = np.minimum(1.0, eta * scaling.max_step(Dx))
            ad = np.minimum(1.0, eta * scaling.max_step(Ds))
            ap[done] = 0.0
            ad[done] = 0.0

            x = x + ap[:, None] * dx
            y = y + ad[:, None] * dy
            s = s + ad[:, None] * ds
    except SolverFailure:
        return [solve(SDPInstance(c=c, A=A, b=B[i], cone=cone),
                      tol=tol, max_iter=max_iter, presolve=False)
                for i in range(nb)]

    out = []
    rp = B - x @ A.T
    rd = c[None, :] - y @ A - s
    for i in range(nb):
        pobj = float(c @ x[i])
        dobj = float(B[i] @ y[i])
        out.append(ConicSolution(
            x=x[i], y=y[i], s=s[i],
            status="optimal" if done[i] else "max_iter",
            iterations=int(it_done[i]) if done[i] else max_iter,
            primal_obj=pobj, dual_obj=dobj,
            gap=abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj)),
            primal_residual=float(np.linalg.norm(rp[i]) / norm_b[i]),
            dual_residual=float(np.linalg.norm(rd[i]) / norm_c),
        ))
    return out


def verify_kkt(instance: SDPInstance, solution: ConicSolution, tol: float = 1e-8) -> dict:
    """Independent KKT residual check (recomputed from scratch, no solver state).

    primal_res:  |Ax - b| / (1 + |b|)      dual_res:  |A'y + s - c| / (1 + |c|)
    gap:         |c'x - b'y| / (1 + |c'x| + |b'y|)
    psd_min_eig: smallest eigenvalue across primal cone blocks (>= -tol wanted)
    """
    A, b, c = instance.A, instance.b, instance.c
    x, y, s = solution.x, solution.y, solution.s
    rp = np.linalg.norm(A @ x - b) / (1.0 + np.linalg.norm(b))
    rd = np.linalg.norm(A.T @ y + s - c) / (1.0 + np.linalg.norm(c))
    pobj, dobj = float(c @ x), float(b @ y)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))

    def min_eig(v):
        worst = np.inf
        for (kind, size), sl in zip(instance.cone.blocks, instance.cone.slices()):
            if kind == PSD:
                worst = min(worst, float(np.linalg.eigvalsh(smat(v[sl], size))[0]))
            else:
                worst = min(worst, float(np.min(v[sl])))
        return worst

    report = {
        "primal_res": float(rp),
        "dual_res": float(rd),
        "gap": float(gap),
        "psd_min_eig": min_eig(x),
        "dual_min_eig": min_eig(s),
        "complementarity": float(abs(x @ s)) / (1.0 + abs(pobj) + abs(dobj)),
    }
    report["ok"] = (report["primal_res"] <= tol and report["dual_res"] <= tol
                    and report["gap"] <= tol and report["psd_min_eig"] >= -tol
                    and report["dual_min_eig"] >= -tol)
    return report


def dump_instance(instance: SDPInstance) -> str:
    """Plain-text dump (dims plus sparse triplets) for reproducing failures."""
    lines = ["blocks " + " ".join(f"{k}:{s}" for k, s in instance.cone.blocks),
             f"m {instance.b.shape[0]} n {instance.c.shape[0]}"]
    nz = np.nonzero(instance.c)[0]
    lines.append("c " + " ".join(f"{j}:{instance.c[j]:.17g}" for j in nz))
    lines.append("b " + " ".join(f"{i}:{v:.17g}" for i, v in enumerate(instance.b)))
    rows, cols = np.nonzero(instance.A)
    lines.append(f"A nnz {rows.size}")
    lines.extend(f"{i} {j} {instance.A[i, j]:.17g}" for i, j in zip(rows, cols))
    return "\n".join(lines) + "\n"
