"""Independent reference computations used to check the package.

Everything here is deliberately implemented from first principles (vertex
enumeration, support functions, Riccati recursions, brute-force search)
without touching the package's own solve paths, so agreement between the
two is meaningful.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from sosnav.geometry import (
    Configuration,
    Polynomial,
    Polytope,
    SemialgebraicShape,
    make_primitive,
    normalize_region,
    pose_from_config,
)


# ---------------------------------------------------------------------------
# support functions and minimal-scaling values

def support_function(shape: SemialgebraicShape, u: np.ndarray) -> float:
    """max_{x in body} u . x, closed form per primitive (body frame)."""
    u = np.asarray(u, dtype=float)
    if shape.kind == "box":
        half = np.asarray(shape.params["half_extents"], dtype=float)
        return float(np.sum(half * np.abs(u)))
    if shape.kind == "ellipsoid":
        axes = np.asarray(shape.params["semi_axes"], dtype=float)
        return float(np.linalg.norm(axes * u))
    if shape.kind == "cylinder":
        r = float(shape.params["radius"])
        h = float(shape.params["half_height"])
        return float(r * np.hypot(u[0], u[1]) + h * abs(u[2]))
    if shape.kind == "elliptical_cone":
        a = float(shape.params["a"])
        b = float(shape.params["b"])
        h = float(shape.params["height"])
        # convex hull of the apex (origin) and the rim disk at z = 2h
        rim = 2.0 * h * u[2] + 2.0 * np.hypot(a * u[0], b * u[1])
        return float(max(0.0, rim))
    raise ValueError(f"no closed-form support for kind {shape.kind!r}")


def support_alpha(shape: SemialgebraicShape, region: Polytope,
                  q: Configuration) -> float:
    """Minimal scaling of region containing the posed body, via supports.

    Facet i of Q(alpha) is F_i . (x - origin) <= alpha g_i; the tightest
    alpha is the max over facets of the body's worst-case left-hand side.
    """
    pose = pose_from_config(q)
    shift = region.F @ (pose.p - region.frame_origin)
    vals = np.array([
        (shift[i] + support_function(shape, pose.R.T @ region.F[i])) / region.g[i]
        for i in range(region.num_facets)
    ])
    return float(max(0.0, vals.max()))


def facet_values(shape: SemialgebraicShape, region: Polytope,
                 q: Configuration) -> np.ndarray:
    """Per-facet minimal scalings; their max is support_alpha."""
    pose = pose_from_config(q)
    shift = region.F @ (pose.p - region.frame_origin)
    return np.array([
        (shift[i] + support_function(shape, pose.R.T @ region.F[i])) / region.g[i]
        for i in range(region.num_facets)
    ])


def vertex_alpha(vertices: np.ndarray, region: Polytope,
                 q: Configuration) -> float:
    """Minimal scaling for a polytopic body given its body-frame vertices."""
    pose = pose_from_config(q)
    world = vertices @ pose.R.T + pose.p
    vals = (world - region.frame_origin) @ region.F.T / region.g
    return float(max(0.0, vals.max()))


# ---------------------------------------------------------------------------
# random geometry generators

def random_region(rng: np.random.Generator, dim: int, extra: int = 3,
                  box: float = 2.5) -> Polytope:
    """Bounded normalized polytope: a box plus a few random cuts."""
    k = int(rng.integers(1, extra + 1))
    F = rng.normal(size=(k, dim))
    F /= np.linalg.norm(F, axis=1, keepdims=True)
    g = rng.uniform(1.0, 3.0, size=k)
    F = np.vstack([F, np.eye(dim), -np.eye(dim)])
    g = np.concatenate([g, rng.uniform(0.8 * box, 1.2 * box, size=2 * dim)])
    return normalize_region(F, g)


def enumerate_vertices(A: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Vertices of {x : A x <= b} by brute-force facet intersection."""
    m, z = A.shape
    verts = []
    for idx in combinations(range(m), z):
        sub = A[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, b[list(idx)])
        if np.all(A @ v <= b + tol):
            verts.append(v)
    if not verts:
        raise ValueError("empty polytope")
    uniq: list[np.ndarray] = []
    for v in verts:
        if not any(np.linalg.norm(v - w) < 1e-8 for w in uniq):
            uniq.append(v)
    return np.array(uniq)


def random_linear_body(rng: np.random.Generator, z: int
                       ) -> tuple[SemialgebraicShape, np.ndarray]:
    """Random bounded polytopic body containing the origin, with vertices.

    Returns the shape (linear inequalities b - A x >= 0) and its vertex set
    for the vertex containment oracle.
    """
    extra = int(rng.integers(1, 4))
    A = rng.normal(size=(extra, z))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    A = np.vstack([A, np.eye(z), -np.eye(z)])
    b = np.concatenate([rng.uniform(0.25, 0.7, size=extra),
                        rng.uniform(0.25, 0.7, size=2 * z)])
    verts = enumerate_vertices(A, b)
    ineqs = tuple(Polynomial.from_affine(b[i], -A[i]) for i in range(A.shape[0]))
    radius = float(np.max(np.linalg.norm(verts, axis=1))) * 1.05
    shape = SemialgebraicShape(z, ineqs, radius, vertices=verts)
    return shape, verts


def random_config(rng: np.random.Generator, dim: int, span: float = 1.5
                  ) -> Configuration:
    if dim == 2:
        q = np.array([*rng.uniform(-span, span, size=2),
                      rng.uniform(-np.pi, np.pi)])
        return Configuration(q, "planar")
    q = np.array([*rng.uniform(-span, span, size=3),
                  rng.uniform(-np.pi, np.pi)])
    return Configuration(q, "spatial")


# ---------------------------------------------------------------------------
# LQR references

def riccati_tracking(A: np.ndarray, B: np.ndarray, Q: np.ndarray,
                     R: np.ndarray, Q_T: np.ndarray, x_ref: np.ndarray,
                     goal: np.ndarray, T: int):
    """Finite-horizon tracking LQR by backward recursion.

    Cost: sum_{t<T} 0.5 (x_t - r_t)' Q (x_t - r_t) + 0.5 u_t' R u_t
          + 0.5 (x_T - goal)' Q_T (x_T - goal),  dynamics x+ = A x + B u.
    Returns per-step feedback gains K_t and affine terms k_t.
    """
    nx, nu = B.shape
    P = Q_T.copy()
    qlin = -Q_T @ goal
    Ks = np.zeros((T, nu, nx))
    ks = np.zeros((T, nu))
    for t in range(T - 1, -1, -1):
        H = R + B.T @ P @ B
        K = -np.linalg.solve(H, B.T @ P @ A)
        k = -np.linalg.solve(H, B.T @ qlin)
        M = A + B @ K
        qlin = -Q @ x_ref[t] + K.T @ R @ k + M.T @ (P @ B @ k + qlin)
        P = Q + K.T @ R @ K + M.T @ P @ M
        P = 0.5 * (P + P.T)
        Ks[t] = K
        ks[t] = k
    return Ks, ks


def riccati_rollout(A, B, Ks, ks, x0, T):
    nx = A.shape[0]
    nu = B.shape[1]
    X = np.zeros((T + 1, nx))
    U = np.zeros((T, nu))
    X[0] = x0
    for t in range(T):
        U[t] = Ks[t] @ X[t] + ks[t]
        X[t + 1] = A @ X[t] + B @ U[t]
    return X, U


def quadratic_argmin_inputs(cost_of_inputs, n_inputs: int) -> np.ndarray:
    """Exact minimizer of a quadratic function of the stacked input vector.

    The function is probed on unit-coordinate perturbations; because it is
    exactly quadratic, second differences recover the full Hessian and the
    minimizer is a single linear solve.  Completely independent of any
    Riccati machinery.
    """
    f0 = cost_of_inputs(np.zeros(n_inputs))
    e = np.eye(n_inputs)
    fp = np.array([cost_of_inputs(e[i]) for i in range(n_inputs)])
    fm = np.array([cost_of_inputs(-e[i]) for i in range(n_inputs)])
    g = (fp - fm) / 2.0
    H = np.zeros((n_inputs, n_inputs))
    for i in range(n_inputs):
        H[i, i] = fp[i] + fm[i] - 2.0 * f0
        for j in range(i + 1, n_inputs):
            fij = cost_of_inputs(e[i] + e[j])
            H[i, j] = H[j, i] = fij - fp[i] - fp[j] + f0
    return np.linalg.solve(H, -g)


# ---------------------------------------------------------------------------
# strictly feasible conic programs

def random_feasible_sdp(rng: np.random.Generator):
    """Instance built around a known interior primal-dual pair.

    Choosing x0, s0 strictly inside the cone and setting b = A x0,
    c = A' y0 + s0 makes the program strictly feasible on both sides, so an
    exact optimum with zero duality gap exists.
    """
    from sosnav.sdp import Cone, SDPInstance, svec

    blocks = []
    for _ in range(int(rng.integers(1, 3))):
        blocks.append(("psd", int(rng.integers(2, 5))))
    if rng.uniform() < 0.7:
        blocks.append(("nn", int(rng.integers(1, 4))))
    cone = Cone(tuple(blocks))
    n = cone.dim

    def interior():
        parts = []
        for kind, size in cone.blocks:
            if kind == "psd":
                W = rng.normal(size=(size, size))
                parts.append(svec(W @ W.T + 0.4 * np.eye(size)))
            else:
                parts.append(rng.uniform(0.4, 2.0, size=size))
        return np.concatenate(parts)

    m = int(rng.integers(2, min(n, 7) + 1))
    A = rng.normal(size=(m, n))
    x0 = interior()
    s0 = interior()
    y0 = rng.normal(size=m)
    b = A @ x0
    c = A.T @ y0 + s0
    return SDPInstance(c=c, A=A, b=b, cone=cone)


# ---------------------------------------------------------------------------
# graph search

def exhaustive_shortest(graph, starts, goals, p_s, p_g):
    """Brute-force minimum over all simple region paths, via the polyline
    length convention: start leg + per-edge center/overlap/center legs +
    goal leg, summed over the assembled polyline."""
    from sosnav.region_graph import region_center

    best = np.inf
    best_seq = None

    def polyline_length(seq):
        pts = [p_s, region_center(graph.regions[seq[0]])]
        for a, b in zip(seq, seq[1:]):
            pts.append(region_center(graph.edge(a, b).overlap))
            pts.append(region_center(graph.regions[b]))
        pts.append(p_g)
        arr = np.vstack(pts)
        return float(np.sum(np.linalg.norm(np.diff(arr, axis=0), axis=1)))

    def dfs(seq, visited):
        nonlocal best, best_seq
        node = seq[-1]
        if node in goals:
            total = polyline_length(seq)
            if total < best - 1e-15 or (abs(total - best) <= 1e-15
                                        and (best_seq is None or seq < best_seq)):
                best = total
                best_seq = tuple(seq)
        for nb in graph.neighbors(node):
            if nb not in visited:
                dfs(seq + [nb], visited | {nb})

    for s in starts:
        dfs([s], {s})
    return best, best_seq
