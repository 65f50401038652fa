"""Minimum-scaling containment certificates for semialgebraic bodies.

Given a robot body B = {x : f_1(x) >= 0, ..., f_m(x) >= 0} in its own frame,
a normalized polytopic region Q with facets g - F w >= 0, and a pose (R, p),
the minimal uniform scaling of Q that still contains the posed body is

    nu(q) = min alpha  s.t.  alpha g_i - F_i p - (F_i R) x >= 0 on B, all i.

alpha <= 1 certifies containment in the unscaled region.  Each facet
nonnegativity condition is relaxed to membership in a truncated quadratic
module of order k: the facet polynomial must equal sigma_0 + sum_j sigma_j f_j
with sums-of-squares multipliers of bounded degree, which matching
coefficients turns into a semidefinite program.  A redundant ball constraint
N^2 - |x|^2 derived from the body's bounding radius is always appended so the
constraint set stays Archimedean.  The relaxation restricts the feasible set,
so the certified alpha is an upper bound on the true minimal scaling: errors
are on the safe side.  For bodies whose defining polynomials are SOS-convex
(all four bundled primitives) the minimum order is exact.

The value function nu is differentiated through the equality duals: with
lambda the multipliers of the coefficient-matching rows,

    dnu/dq = sum_{i,l} lambda_{i,l} * d coef_{i,l} / dq,

and only the constant row (-F_i dp) and the linear rows (-F_i dR) move with q.
At poses where the active facet set is degenerate this is one subgradient
rather than the gradient.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import SolverFailure
from .geometry import (
    Configuration,
    Polytope,
    SemialgebraicShape,
    pose_from_config,
    region_rows_in_body_frame,
)
from .polynomials import MonomialBasis, Polynomial, basis
from .sdp import (
    NONNEG,
    PSD,
    SQRT2,
    Cone,
    ConicSolution,
    SDPInstance,
    smat,
    solve as conic_solve,
    solve_batch as conic_solve_batch,
    svec_size,
)

OPTIMAL = "optimal"
NUMERICAL_TROUBLE = "numerical_trouble"


def min_relaxation_order(shape: SemialgebraicShape, region: Polytope | None = None) -> int:
    """Smallest admissible relaxation order.

    The facet polynomials are affine (degree 1) and each body inequality of
    degree d needs floor(d/2) in the degree budget, so the bound is
    max(1, max_j floor(deg f_j / 2)).  The appended ball constraint has
    degree 2 and never raises it.
    """
    degs = [f.degree for f in shape.inequalities]
    return max(1, max((d // 2 for d in degs), default=1))


def _multiplier_columns(half: MonomialBasis, f: Polynomial,
                        cbasis: MonomialBasis) -> np.ndarray:
    """Columns of the coefficient-matching rows for one Gram block.

    For the multiplier sigma(x) = phi(x)' X phi(x) with half basis phi, the
    coefficient of monomial l in sigma * f is <A_l, X>.  Returns the matrix
    whose row l is svec(A_l), so that A_sub @ svec(X) gives all coefficients.
    """
    lsz = len(half)
    out = np.zeros((len(cbasis), svec_size(lsz)))
    pair = 0
    for a in range(lsz):
        ma = half.monomials[a]
        for b in range(a, lsz):
            mb = half.monomials[b]
            scale = 1.0 if a == b else SQRT2
            for mc, coef in f.terms.items():
                m = tuple(ea + eb + ec for ea, eb, ec in zip(ma, mb, mc))
                out[cbasis.index(m), pair] += coef * scale
            pair += 1
    return out


class ScalingProblem:
    """Precomputed certificate structure for one (shape, region, order) triple.

    Everything except the equality right-hand side is independent of the
    pose: the constraint matrix, cone layout, and objective are assembled
    once and reused across configurations (and across threads; the object is
    immutable after construction).
    """

    def __init__(self, shape: SemialgebraicShape, region: Polytope,
                 relaxation_order: int | None = None):
        if shape.dimension != region.dimension:
            raise ValueError("shape and region dimensions differ")
        k_min = min_relaxation_order(shape)
        k = k_min if relaxation_order is None else int(relaxation_order)
        if k < k_min:
            raise ValueError(f"relaxation order {k} below minimum {k_min}")
        self.shape = shape
        self.region = region
        self.relaxation_order = k
        z = shape.dimension

        self.constraint_basis = basis(z, 2 * k)
        n_mono = len(self.constraint_basis)
        assert self.constraint_basis.monomials[0] == (0,) * z
        self.const_row = 0
        unit = lambda t: tuple(1 if u == t else 0 for u in range(z))
        self.lin_rows = tuple(self.constraint_basis.index(unit(t)) for t in range(z))

        # Multipliers: sigma_0 (weight 1), one per body inequality whose
        # degree fits the budget, and one for the redundant ball constraint.
        weights = [("sos", Polynomial.constant(z, 1.0))]
        weights += [(f"body_{j}", f) for j, f in enumerate(shape.inequalities)]
        weights.append(("ball", shape.ball_inequality()))
        self.block_labels: list[str] = []
        self.block_sizes: list[int] = []
        weight_cols: list[np.ndarray] = []
        for label, f in weights:
            t = k - (f.degree + 1) // 2
            if t < 0:
                continue
            half = basis(z, t)
            self.block_labels.append(label)
            self.block_sizes.append(len(half))
            weight_cols.append(_multiplier_columns(half, f, self.constraint_basis))

        # Column layout: same-size PSD blocks adjacent (the solver batches
        # consecutive equal-order blocks), all 1x1 blocks merged into one
        # nonnegative run with the scaling variable alpha at its very end.
        r = region.num_facets
        self.num_rows = r * n_mono
        order = sorted(range(len(self.block_sizes)),
                       key=lambda j: -self.block_sizes[j])
        blocks: list[tuple[str, int]] = []
        layout: list[tuple[int, int, slice]] = []  # (weight j, facet i, cols)
        at = 0
        for j in order:
            s = self.block_sizes[j]
            if s == 1:
                continue
            for i in range(r):
                w = svec_size(s)
                blocks.append((PSD, s))
                layout.append((j, i, slice(at, at + w)))
                at += w
        scalar_weights = [j for j in order if self.block_sizes[j] == 1]
        for j in scalar_weights:
            for i in range(r):
                layout.append((j, i, slice(at, at + 1)))
                at += 1
        n_scalars = len(scalar_weights) * r + 1  # trailing alpha
        blocks.append((NONNEG, n_scalars))
        n_vars = at + 1
        self.cone = Cone(tuple(blocks))
        self._layout = tuple(layout)

        A = np.zeros((self.num_rows, n_vars))
        for j, i, cols in layout:
            rows = slice(i * n_mono, (i + 1) * n_mono)
            A[rows, cols] = -weight_cols[j]
        for i in range(r):
            A[i * n_mono + self.const_row, -1] = region.g[i]
        A.setflags(write=False)
        self.A = A

        c = np.zeros(n_vars)
        c[-1] = 1.0
        c.setflags(write=False)
        self.c = c

    @property
    def num_facets(self) -> int:
        return self.region.num_facets

    def rhs(self, q: Configuration) -> np.ndarray:
        """Equality right-hand side at configuration q (the only pose-dependent part)."""
        rows = region_rows_in_body_frame(self.region, pose_from_config(q))
        n_mono = len(self.constraint_basis)
        b = np.zeros(self.num_rows)
        for i in range(self.num_facets):
            base = i * n_mono
            b[base + self.const_row] = -rows.const[i]
            for t, rt in enumerate(self.lin_rows):
                b[base + rt] = -rows.lin[i, t]
        return b


@dataclass(frozen=True)
class ScalingSolution:
    """Certified scaling with the pieces needed for gradients and audits.

    ``duals`` holds one multiplier per coefficient-matching row (facets
    outer, monomials inner in graded lex order), in the sign convention
    where the value function differentiates as sum lambda * dcoef/dq.
    """

    alpha: float
    gram: tuple[tuple[np.ndarray, ...], ...]
    duals: np.ndarray
    status: str
    gap: float
    iterations: int
    conic: ConicSolution | None = None

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class GradientResult:
    dalpha_dq: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.dalpha_dq, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("gradient has non-finite entries")
        object.__setattr__(self, "dalpha_dq", v)


def assemble(problem: ScalingProblem, q: Configuration) -> SDPInstance:
    """Full conic instance at configuration q; structure shared, rhs fresh."""
    return SDPInstance(c=problem.c, A=problem.A, b=problem.rhs(q), cone=problem.cone)


def _extract(problem: ScalingProblem, sol: ConicSolution,
             keep_conic: bool) -> ScalingSolution:
    per_facet: list[list] = [[None] * len(problem.block_sizes)
                             for _ in range(problem.num_facets)]
    for j, i, cols in problem._layout:
        seg = sol.x[cols]
        size = problem.block_sizes[j]
        per_facet[i][j] = smat(seg, size) if size > 1 else np.array([[seg[0]]])
    gram = tuple(tuple(facet) for facet in per_facet)
    status = OPTIMAL if sol.status == "optimal" else NUMERICAL_TROUBLE
    return ScalingSolution(
        alpha=float(sol.x[-1]),
        gram=gram,
        duals=-sol.y,
        status=status,
        gap=sol.gap,
        iterations=sol.iterations,
        conic=sol if keep_conic else None,
    )


def solve_min_scaling(problem: ScalingProblem, q: Configuration,
                      tol: float = 1e-8, max_iter: int = 100,
                      keep_conic: bool = False) -> ScalingSolution:
    """Certified minimal scaling at configuration q.

    The equality rows are structurally independent (each touches a distinct
    set of sigma_0 Gram entries), so the solver's row presolve is skipped.
    """
    instance = assemble(problem, q)
    sol = conic_solve(instance, tol=tol, max_iter=max_iter, presolve=False)
    return _extract(problem, sol, keep_conic)


def gradient(problem: ScalingProblem, q: Configuration,
             sol: ScalingSolution) -> GradientResult:
    """Derivative of the certified scaling with respect to the configuration.

    Only the constant and linear coefficient rows depend on q, through
    (R, p); the chain rule contracts the row duals with those coefficient
    Jacobians.  At poses with a non-unique active facet this returns one
    subgradient of the value function.
    """
    if sol.status != OPTIMAL:
        raise ValueError("gradient requires an optimal certificate")
    if sol.duals is None or sol.duals.shape != (problem.num_rows,):
        raise ValueError("solution is missing equality duals")
    rows = region_rows_in_body_frame(problem.region, pose_from_config(q))
    n_mono = len(problem.constraint_basis)
    nq = rows.dconst.shape[1]
    grad = np.zeros(nq)
    for i in range(problem.num_facets):
        base = i * n_mono
        grad += sol.duals[base + problem.const_row] * rows.dconst[i]
        for t, rt in enumerate(problem.lin_rows):
            grad += sol.duals[base + rt] * rows.dlin[i, t]
    return GradientResult(grad)


def _solve_one(problem: ScalingProblem, q: Configuration, tol: float,
               max_iter: int, want_gradient: bool):
    try:
        sol = solve_min_scaling(problem, q, tol=tol, max_iter=max_iter)
    except SolverFailure:
        empty = ScalingSolution(alpha=math.inf, gram=(), duals=np.zeros(problem.num_rows),
                                status=NUMERICAL_TROUBLE, gap=math.inf, iterations=0)
        return empty, None
    if want_gradient and sol.status == OPTIMAL:
        return sol, gradient(problem, q, sol)
    return sol, None


def batch_solve(problem: ScalingProblem, configs, tol: float = 1e-8,
                max_iter: int = 100, want_gradient: bool = True,
                threads: int | None = None):
    """Independent certificates for many configurations, order preserving.

    All configurations share (c, A, cone) and differ only in the equality
    rhs, so the whole batch is solved in lockstep by the conic solver; a
    numerical breakdown of the batch falls back to per-item solves with
    ``threads`` workers, and per-item failures come back as
    numerical_trouble entries instead of aborting the batch.
    """
    configs = list(configs)
    if len(configs) > 1:
        try:
            B = np.stack([problem.rhs(q) for q in configs])
            sols = conic_solve_batch(
                SDPInstance(c=problem.c, A=problem.A, b=B[0], cone=problem.cone),
                B, tol=tol, max_iter=max_iter)
        except SolverFailure:
            pass
        else:
            out = []
            for q, sol in zip(configs, sols):
                scaled = _extract(problem, sol, keep_conic=False)
                grad = None
                if want_gradient and scaled.status == OPTIMAL:
                    grad = gradient(problem, q, scaled)
                out.append((scaled, grad))
            return out
    if threads is not None and threads > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(
                lambda q: _solve_one(problem, q, tol, max_iter, want_gradient),
                configs))
    return [_solve_one(problem, q, tol, max_iter, want_gradient) for q in configs]
