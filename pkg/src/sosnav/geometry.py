"""Robot body sets, polytopic regions, and rigid-body poses with Jacobians.

Robot bodies are semialgebraic sets {x : f_j(x) >= 0} in the body frame.
Free regions are bounded polytopes stored in a normalized frame: the frame
origin sits at the Chebyshev center, every facet row of F has unit norm,
and g > 0 componentwise, so scaling the region means scaling g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import SosNavError
from .polynomials import Polynomial

DEGENERATE_RADIUS = 1e-9


@dataclass(frozen=True)
class SemialgebraicShape:
    """Body set {x : f_1(x) >= 0, ..., f_m(x) >= 0} contained in a known ball.

    ``bounding_radius`` is the radius N of the redundant ball inequality
    N^2 - |x|^2 >= 0 appended by the certificate solver to keep the
    constraint set Archimedean.  ``kind``/``params`` record the generating
    primitive when there is one; ``vertices`` is populated for polytopic
    bodies and feeds the vertex containment oracle in tests.
    """

    dimension: int
    inequalities: tuple[Polynomial, ...]
    bounding_radius: float
    kind: str | None = None
    params: dict | None = None
    vertices: np.ndarray | None = None

    def __post_init__(self):
        for f in self.inequalities:
            if f.dimension != self.dimension:
                raise ValueError("inequality dimension mismatch")
        if not self.bounding_radius > 0:
            raise ValueError("bounding_radius must be positive")

    def ball_inequality(self) -> Polynomial:
        """Redundant Archimedean ball constraint N^2 - sum x_i^2."""
        terms = {(0,) * self.dimension: self.bounding_radius**2}
        for i in range(self.dimension):
            e = [0] * self.dimension
            e[i] = 2
            terms[tuple(e)] = -1.0
        return Polynomial(self.dimension, terms)

    def contains(self, x, margin: float = 0.0) -> bool:
        return all(f(x) >= -margin for f in self.inequalities)


def make_primitive(kind: str, params: dict) -> SemialgebraicShape:
    """Construct one of the four primitive bodies.

    box:             half_extents (len z) -> 2z linear inequalities
    ellipsoid:       semi_axes (len z)    -> 1 - sum (x_i/a_i)^2
    cylinder:        radius, half_height  -> {r^2-x^2-y^2, h-z, h+z}
    elliptical_cone: a, b, height         -> {(z/h)^2-(x/a)^2-(y/b)^2, z, 2h-z}
                     (apex at the origin, opening upward, clipped at z = 2h)
    """
    if kind == "box":
        half = np.asarray(params["half_extents"], dtype=float)
        _require_positive(half, "half_extents")
        z = half.shape[0]
        ineqs = []
        for i in range(z):
            e = np.zeros(z)
            e[i] = 1.0
            ineqs.append(Polynomial.from_affine(half[i], -e))
            ineqs.append(Polynomial.from_affine(half[i], e))
        corners = np.array(list(_signed_corners(half)))
        return SemialgebraicShape(
            z, tuple(ineqs), float(np.linalg.norm(half)),
            kind=kind, params=dict(params), vertices=corners,
        )

    if kind == "ellipsoid":
        axes = np.asarray(params["semi_axes"], dtype=float)
        _require_positive(axes, "semi_axes")
        z = axes.shape[0]
        terms = {(0,) * z: 1.0}
        for i in range(z):
            e = [0] * z
            e[i] = 2
            terms[tuple(e)] = -1.0 / axes[i] ** 2
        f = Polynomial(z, terms)
        return SemialgebraicShape(z, (f,), float(axes.max()), kind=kind, params=dict(params))

    if kind == "cylinder":
        r = float(params["radius"])
        h = float(params["half_height"])
        _require_positive(np.array([r, h]), "radius/half_height")
        side = Polynomial(3, {(0, 0, 0): r * r, (2, 0, 0): -1.0, (0, 2, 0): -1.0})
        top = Polynomial.from_affine(h, [0.0, 0.0, -1.0])
        bottom = Polynomial.from_affine(h, [0.0, 0.0, 1.0])
        return SemialgebraicShape(
            3, (side, top, bottom), math.sqrt(r * r + h * h),
            kind=kind, params=dict(params),
        )

    if kind == "elliptical_cone":
        a = float(params["a"])
        b = float(params["b"])
        h = float(params["height"])
        _require_positive(np.array([a, b, h]), "a/b/height")
        quad = Polynomial(3, {
            (0, 0, 2): 1.0 / (h * h),
            (2, 0, 0): -1.0 / (a * a),
            (0, 2, 0): -1.0 / (b * b),
        })
        above = Polynomial(3, {(0, 0, 1): 1.0})
        below = Polynomial.from_affine(2.0 * h, [0.0, 0.0, -1.0])
        rim = math.sqrt((2 * max(a, b)) ** 2 + (2 * h) ** 2)
        return SemialgebraicShape(3, (quad, above, below), rim, kind=kind, params=dict(params))

    raise ValueError(f"unknown primitive kind {kind!r}")


def shape_from_records(records: list[list[dict]], dimension: int,
                       bounding_radius: float) -> SemialgebraicShape:
    """Body from raw polynomial inequality records (scenario JSON)."""
    ineqs = tuple(Polynomial.from_records(r, dimension) for r in records)
    return SemialgebraicShape(dimension, ineqs, bounding_radius, kind="semialgebraic")


def _require_positive(v: np.ndarray, name: str):
    if not np.all(v > 0):
        raise ValueError(f"{name} must be strictly positive, got {v}")


def _signed_corners(half: np.ndarray):
    z = half.shape[0]
    for mask in range(2**z):
        yield [half[i] if (mask >> i) & 1 else -half[i] for i in range(z)]


@dataclass(frozen=True)
class Polytope:
    """Normalized bounded polytope {x : g - F (x - origin) >= 0}.

    Rows of F have unit norm and g > 0, so the frame origin is strictly
    interior and the uniformly scaled region Q(alpha) is obtained by
    replacing g with alpha * g.
    """

    F: np.ndarray
    g: np.ndarray
    frame_origin: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        g = np.asarray(self.g, dtype=float).ravel()
        origin = np.asarray(self.frame_origin, dtype=float).ravel()
        if F.shape[0] != g.shape[0]:
            raise ValueError("F row count and g length differ")
        if F.shape[1] != origin.shape[0]:
            raise ValueError("F column count and origin length differ")
        if not np.all(g > 0):
            raise ValueError("g must be strictly positive (origin interior)")
        norms = np.linalg.norm(F, axis=1)
        if np.any(norms < 1e-12):
            raise ValueError("zero rows in F")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "frame_origin", origin)

    @property
    def dimension(self) -> int:
        return self.F.shape[1]

    @property
    def num_facets(self) -> int:
        return self.F.shape[0]

    def contains(self, points, scale: float = 1.0, margin: float = 0.0) -> np.ndarray:
        """Boolean membership of world points in Q(scale)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = pts - self.frame_origin
        lhs = vals @ self.F.T
        inside = np.all(lhs <= scale * self.g + margin, axis=1)
        return inside if np.asarray(points).ndim > 1 else bool(inside[0])

    def violation(self, points, scale: float = 1.0) -> np.ndarray:
        """Worst facet violation (<= 0 means inside) per world point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lhs = (pts - self.frame_origin) @ self.F.T - scale * self.g
        out = lhs.max(axis=1)
        return out if np.asarray(points).ndim > 1 else float(out[0])

    def world_halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """(F, g_raw) with the constraint expressed as g_raw - F x >= 0 in world coords."""
        return self.F.copy(), self.g + self.F @ self.frame_origin

    def to_record(self) -> dict:
        return {"F": self.F.tolist(), "g": self.g.tolist(),
                "origin": self.frame_origin.tolist()}

    @staticmethod
    def from_record(rec: dict) -> "Polytope":
        return Polytope(np.asarray(rec["F"], dtype=float),
                        np.asarray(rec["g"], dtype=float),
                        np.asarray(rec["origin"], dtype=float))


def chebyshev_center(F, g_raw) -> tuple[np.ndarray, float]:
    """Center and radius of the largest ball inscribed in {x : g_raw - F x >= 0}.

    Solved as the LP  max r  s.t.  F_i x + r ||F_i|| <= g_i,  r >= 0.
    Raises for empty or unbounded polytopes.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    g_raw = np.asarray(g_raw, dtype=float).ravel()
    m, n = F.shape
    norms = np.linalg.norm(F, axis=1)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([F, norms[:, None]])
    bounds = [(None, None)] * n + [(0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=g_raw, bounds=bounds, method="highs")
    if res.status == 3:
        raise SosNavError("polytope is unbounded")
    if not res.success:
        raise SosNavError(f"chebyshev center LP failed: {res.message}")
    center = res.x[:n]
    radius = res.x[-1]
    if radius < -1e-12:
        raise SosNavError("polytope is empty")
    return center, float(radius)


def normalize_region(F, g_raw) -> Polytope:
    """Translate the frame origin to the Chebyshev center and unit-normalize rows.

    Rejects degenerate polytopes (inscribed radius <= 1e-9).
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    g_raw = np.asarray(g_raw, dtype=float).ravel()
    center, radius = chebyshev_center(F, g_raw)
    if radius <= DEGENERATE_RADIUS:
        raise SosNavError(f"degenerate polytope: inscribed radius {radius:.3e}")
    g_shift = g_raw - F @ center
    norms = np.linalg.norm(F, axis=1)
    return Polytope(F / norms[:, None], g_shift / norms, center)


PLANAR = "planar"
SPATIAL = "spatial"


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.fmod(theta + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@dataclass(frozen=True)
class Configuration:
    """Robot configuration: planar (x, y, theta) or spatial (x, y, z, yaw)."""

    q: np.ndarray
    tag: str = PLANAR

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).ravel().copy()
        if self.tag == PLANAR:
            if q.shape != (3,):
                raise ValueError("planar configuration needs (x, y, theta)")
            q[2] = wrap_angle(q[2])
        elif self.tag == SPATIAL:
            if q.shape != (4,):
                raise ValueError("spatial configuration needs (x, y, z, yaw)")
            q[3] = wrap_angle(q[3])
        else:
            raise ValueError(f"unknown parameterization {self.tag!r}")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    @property
    def position(self) -> np.ndarray:
        return self.q[:2] if self.tag == PLANAR else self.q[:3]


@dataclass(frozen=True)
class PoseWithJacobians:
    """Rotation R, translation p, and their partials per configuration coordinate."""

    R: np.ndarray
    p: np.ndarray
    dR: tuple[np.ndarray, ...]
    dp: tuple[np.ndarray, ...]


def pose_from_config(c: Configuration) -> PoseWithJacobians:
    """World pose of the body frame plus analytic Jacobians."""
    q = c.q
    if c.tag == PLANAR:
        ct, st = math.cos(q[2]), math.sin(q[2])
        R = np.array([[ct, -st], [st, ct]])
        p = q[:2].copy()
        dR_theta = np.array([[-st, -ct], [ct, -st]])
        zero = np.zeros((2, 2))
        dR = (zero, zero.copy(), dR_theta)
        dp = (np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.zeros(2))
        return PoseWithJacobians(R, p, dR, dp)

    ct, st = math.cos(q[3]), math.sin(q[3])
    R = np.array([[ct, -st, 0.0], [st, ct, 0.0], [0.0, 0.0, 1.0]])
    p = q[:3].copy()
    dR_yaw = np.array([[-st, -ct, 0.0], [ct, -st, 0.0], [0.0, 0.0, 0.0]])
    zero3 = np.zeros((3, 3))
    dR = (zero3, zero3.copy(), zero3.copy(), dR_yaw)
    dp = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]),
          np.array([0.0, 0.0, 1.0]), np.zeros(3))
    return PoseWithJacobians(R, p, dR, dp)


@dataclass(frozen=True)
class RegionRows:
    """Per-facet affine forms of the scaled region seen from the body frame.

    Facet i of Q(alpha) reads  alpha * g[i] + const[i] + lin[i] . x >= 0
    for x in body coordinates, where const = -F (p - origin) and lin = -F R.
    dconst and dlin hold the partials of those coefficients per configuration
    coordinate.
    """

    g: np.ndarray          # (r,)
    const: np.ndarray      # (r,)
    lin: np.ndarray        # (r, z)
    dconst: np.ndarray     # (r, nq)
    dlin: np.ndarray       # (r, z, nq)


def region_rows_in_body_frame(P: Polytope, pose: PoseWithJacobians) -> RegionRows:
    """Coefficients of the region facets in the body frame, with pose Jacobians.

    ``pose`` is the world pose of the body frame; the region's own frame is a
    pure translation of world by ``P.frame_origin``.
    """
    p_rel = pose.p - P.frame_origin
    nq = len(pose.dp)
    const = -(P.F @ p_rel)
    lin = -(P.F @ pose.R)
    dconst = np.stack([-(P.F @ dp) for dp in pose.dp], axis=1)
    dlin = np.stack([-(P.F @ dR) for dR in pose.dR], axis=2)
    assert dlin.shape == (P.num_facets, P.dimension, nq)
    return RegionRows(P.g.copy(), const, lin, dconst, dlin)


def sample_boundary(shape: SemialgebraicShape, n: int, rng: np.random.Generator) -> np.ndarray:
    """Points on the body boundary in body coordinates.

    Exact samplers for the four primitives; other shapes fall back to ray
    casting from the origin, which requires the origin to be interior.
    """
    if shape.kind == "box":
        half = np.asarray(shape.params["half_extents"], dtype=float)
        z = half.shape[0]
        areas = np.array([np.prod(np.delete(half, i)) for i in range(z)])
        probs = np.repeat(areas, 2)
        probs = probs / probs.sum()
        faces = rng.choice(2 * z, size=n, p=probs)
        pts = rng.uniform(-1.0, 1.0, size=(n, z)) * half
        for k in range(n):
            axis, side = divmod(faces[k], 2)
            pts[k, axis] = half[axis] if side == 0 else -half[axis]
        return pts

    if shape.kind == "ellipsoid":
        axes = np.asarray(shape.params["semi_axes"], dtype=float)
        u = rng.normal(size=(n, axes.shape[0]))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return u * axes

    if shape.kind == "cylinder":
        r = float(shape.params["radius"])
        h = float(shape.params["half_height"])
        side_area = 2.0 * math.pi * r * 2.0 * h
        cap_area = math.pi * r * r
        probs = np.array([side_area, cap_area, cap_area])
        probs /= probs.sum()
        which = rng.choice(3, size=n, p=probs)
        theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
        pts = np.empty((n, 3))
        for k in range(n):
            if which[k] == 0:
                pts[k] = [r * math.cos(theta[k]), r * math.sin(theta[k]),
                          rng.uniform(-h, h)]
            else:
                rad = r * math.sqrt(rng.uniform())
                zval = h if which[k] == 1 else -h
                pts[k] = [rad * math.cos(theta[k]), rad * math.sin(theta[k]), zval]
        return pts

    if shape.kind == "elliptical_cone":
        a = float(shape.params["a"])
        b = float(shape.params["b"])
        h = float(shape.params["height"])
        # Lateral surface vs top cap, weighted roughly by area.
        lateral = math.pi * (a + b) * 2.0 * h
        cap = math.pi * (2 * a) * (2 * b)
        probs = np.array([lateral, cap])
        probs /= probs.sum()
        which = rng.choice(2, size=n, p=probs)
        theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
        pts = np.empty((n, 3))
        for k in range(n):
            if which[k] == 0:
                zval = 2.0 * h * math.sqrt(rng.uniform())
                s = zval / h
                pts[k] = [a * s * math.cos(theta[k]), b * s * math.sin(theta[k]), zval]
            else:
                s = 2.0 * math.sqrt(rng.uniform())
                pts[k] = [a * s * math.cos(theta[k]), b * s * math.sin(theta[k]), 2.0 * h]
        return pts

    return _ray_cast_boundary(shape, n, rng)


def _ray_cast_boundary(shape: SemialgebraicShape, n: int,
                       rng: np.random.Generator) -> np.ndarray:
    if not shape.contains(np.zeros(shape.dimension), margin=1e-12):
        raise SosNavError("boundary sampling fallback needs the origin interior")
    dirs = rng.normal(size=(n, shape.dimension))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = np.empty_like(dirs)
    for k, d in enumerate(dirs):
        lo, hi = 0.0, shape.bounding_radius * 1.01
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if shape.contains(mid * d):
                lo = mid
            else:
                hi = mid
        pts[k] = lo * d
    return pts


def transform_points(pose: PoseWithJacobians, pts: np.ndarray) -> np.ndarray:
    """Body points to world points."""
    return pts @ pose.R.T + pose.p
