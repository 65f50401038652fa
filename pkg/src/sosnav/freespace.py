"""Occupancy grids and decomposition of free space into polytopic regions.

The workspace is an axis-aligned box discretized at a fixed resolution; a
cell is occupied when its center lies inside any obstacle.  Decomposition
repeatedly seeds a region at an uncovered free cell, starts from the full
workspace box, and walls off occupied cell centers with separating
hyperplanes until none remain inside, yielding overlapping convex regions
whose interiors are obstacle-free at cell-center resolution.

Planar workspaces are stored as 3D cell arrays of height one; all produced
geometry (centers, regions) lives in the true workspace dimension.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import DecompositionError, ScenarioError
from .geometry import Polytope, normalize_region

STATUS_OK = "ok"
STATUS_PARTIAL = "partial"


@dataclass(frozen=True)
class BoxObstacle:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).ravel()
        hi = np.asarray(self.hi, dtype=float).ravel()
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box obstacle needs lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def to_record(self) -> dict:
        return {"type": "box", "min": self.lo.tolist(), "max": self.hi.tolist()}


@dataclass(frozen=True)
class PolytopeObstacle:
    """Convex obstacle {x : F x <= g} in world coordinates."""

    F: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        g = np.asarray(self.g, dtype=float).ravel()
        if F.shape[0] != g.shape[0]:
            raise ValueError("F row count and g length differ")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "g", g)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return np.all(pts @ self.F.T <= self.g, axis=1)

    def to_record(self) -> dict:
        return {"type": "polytope", "F": self.F.tolist(), "g": self.g.tolist()}


def obstacle_from_record(rec: dict):
    kind = rec.get("type")
    try:
        if kind == "box":
            return BoxObstacle(np.asarray(rec["min"], float), np.asarray(rec["max"], float))
        if kind == "polytope":
            return PolytopeObstacle(np.asarray(rec["F"], float), np.asarray(rec["g"], float))
    except (KeyError, ValueError) as exc:
        raise ScenarioError(f"malformed {kind} obstacle record: {exc}") from exc
    raise ScenarioError(f"unknown obstacle type {kind!r}")


@dataclass(frozen=True)
class OccupancyGrid:
    """Boolean occupancy over a box workspace.

    ``cells`` is always a 3-axis array; planar workspaces use a single layer
    (depth one) and report dimension 2.
    """

    bounds: np.ndarray       # (dimension, 2) rows [lo, hi]
    resolution: float
    cells: np.ndarray        # bool, shape (nx, ny, nz); nz = 1 when planar

    def __post_init__(self):
        bounds = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        if bounds.shape[0] not in (2, 3) or bounds.shape[1] != 2:
            raise ValueError("bounds must be (2|3, 2)")
        if np.any(bounds[:, 1] <= bounds[:, 0]):
            raise ValueError("workspace bounds have non-positive extent")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        expect = tuple(math.ceil((hi - lo) / self.resolution)
                       for lo, hi in bounds) + (1,) * (3 - bounds.shape[0])
        cells = np.asarray(self.cells, dtype=bool)
        if cells.shape != expect:
            raise ValueError(f"cells shape {cells.shape}, expected {expect}")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "cells", cells)

    @property
    def dimension(self) -> int:
        return self.bounds.shape[0]

    def axis_centers(self, d: int) -> np.ndarray:
        lo = self.bounds[d, 0]
        n = self.cells.shape[d]
        return lo + (np.arange(n) + 0.5) * self.resolution

    def centers(self) -> np.ndarray:
        """All cell centers, C-order flattened, in workspace coordinates."""
        axes = [self.axis_centers(d) for d in range(self.dimension)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def occupancy_flat(self) -> np.ndarray:
        """Occupancy aligned with centers(): planar grids drop the depth axis."""
        c = self.cells[:, :, 0] if self.dimension == 2 else self.cells
        return c.ravel()

    def free_centers(self) -> np.ndarray:
        return self.centers()[~self.occupancy_flat()]

    def occupied_centers(self) -> np.ndarray:
        return self.centers()[self.occupancy_flat()]


def rasterize(obstacles, bounds, resolution: float) -> OccupancyGrid:
    """Grid whose cells are occupied iff their center lies in an obstacle."""
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    if np.any(bounds[:, 1] <= bounds[:, 0]):
        raise ValueError("workspace bounds have non-positive extent")
    dim = bounds.shape[0]
    shape = tuple(math.ceil((hi - lo) / resolution) for lo, hi in bounds)
    grid = OccupancyGrid(bounds, resolution,
                         np.zeros(shape + (1,) * (3 - dim), dtype=bool))
    if not obstacles:
        return grid
    pts = grid.centers()
    occ = np.zeros(pts.shape[0], dtype=bool)
    for obs in obstacles:
        occ |= obs.contains(pts)
    cells = occ.reshape(shape + (1,) * (3 - dim))
    return OccupancyGrid(bounds, resolution, cells.astype(bool))


@dataclass(frozen=True)
class RegionSet:
    regions: tuple[Polytope, ...]
    provenance: str = "decomposed"
    status: str = STATUS_OK
    uncovered_fraction: float = 0.0

    def __len__(self) -> int:
        return len(self.regions)

    def __iter__(self):
        return iter(self.regions)

    def __getitem__(self, i: int) -> Polytope:
        return self.regions[i]


def _bounds_rows(bounds: np.ndarray):
    dim = bounds.shape[0]
    eye = np.eye(dim)
    F = np.vstack([eye, -eye])
    g = np.concatenate([bounds[:, 1], -bounds[:, 0]])
    return F, g


def _prune_rows(F: np.ndarray, g: np.ndarray, tol: float = 1e-9):
    """Drop rows implied by the rest (LP per row); keeps the set unchanged."""
    keep = list(range(F.shape[0]))
    i = 0
    while i < len(keep):
        row = keep[i]
        others = [r for r in keep if r != row]
        res = linprog(-F[row], A_ub=F[others], b_ub=g[others],
                      bounds=[(None, None)] * F.shape[1], method="highs")
        if res.status == 0 and -res.fun <= g[row] + tol:
            keep.pop(i)
        else:
            i += 1
    return F[keep], g[keep]


def _grow_region(seed: np.ndarray, occupied: np.ndarray, bounds: np.ndarray,
                 margin: float) -> Polytope:
    """Start from the workspace box and wall off occupied centers.

    Each cut separates the occupied center nearest to the seed with the
    hyperplane normal to (center - seed), placed ``margin`` short of the
    center, so excluded centers end up at least ``margin`` outside.
    """
    F_box, g_box = _bounds_rows(bounds)
    cuts_F: list[np.ndarray] = []
    cuts_g: list[float] = []
    pts = occupied
    while pts.shape[0]:
        F = np.vstack([F_box] + cuts_F) if cuts_F else F_box
        g = np.concatenate([g_box, np.asarray(cuts_g)]) if cuts_g else g_box
        inside = np.all(pts @ F.T <= g[None, :] - 1e-12, axis=1)
        pts = pts[inside]
        if not pts.shape[0]:
            break
        d2 = np.sum((pts - seed) ** 2, axis=1)
        target = pts[np.argmin(d2)]
        gap = np.linalg.norm(target - seed)
        if gap <= margin:
            raise DecompositionError(
                f"seed {seed.tolist()} within {margin} of an occupied center")
        normal = (target - seed) / gap
        cuts_F.append(normal)
        cuts_g.append(float(normal @ target) - margin)
    F = np.vstack([F_box] + cuts_F) if cuts_F else F_box
    g = np.concatenate([g_box, np.asarray(cuts_g)]) if cuts_g else g_box
    F, g = _prune_rows(F, g)
    return normalize_region(F, g)


def grow_region(grid: OccupancyGrid, seed) -> Polytope:
    """Grow a single obstacle-free region from a seed point.

    Same construction as one decomposition step; used to append transition
    regions at overlap centers.  Raises when the seed is blocked.
    """
    seed = np.asarray(seed, dtype=float).ravel()
    if seed.shape[0] != grid.dimension:
        raise ValueError("seed dimension does not match the grid")
    if np.any(seed < grid.bounds[:, 0]) or np.any(seed > grid.bounds[:, 1]):
        raise DecompositionError(f"seed {seed.tolist()} outside workspace bounds")
    return _grow_region(seed, grid.occupied_centers(), grid.bounds,
                        0.5 * grid.resolution)


def coverage(grid: OccupancyGrid, regions) -> float:
    """Fraction of free cell centers inside the union of the regions."""
    free = grid.free_centers()
    if free.shape[0] == 0:
        return 1.0
    covered = np.zeros(free.shape[0], dtype=bool)
    for reg in regions:
        covered |= reg.contains(free)
    return float(covered.mean())


def decompose(grid: OccupancyGrid, coverage_threshold: float = 0.05,
              rng_seed: int = 0, max_regions: int = 128) -> RegionSet:
    """Cover the free space with overlapping obstacle-free polytopes.

    Seeds are drawn uniformly from uncovered free cell centers with a fixed
    generator, so results are reproducible.  Stops when the uncovered free
    fraction drops to the threshold; if the region budget runs out first the
    partial set is returned with a warning status instead of raising.
    """
    if not 0.0 < coverage_threshold <= 1.0:
        raise ValueError("coverage_threshold must be in (0, 1]")
    free = grid.free_centers()
    if free.shape[0] == 0:
        raise DecompositionError("workspace has no free cells")
    occupied = grid.occupied_centers()
    rng = np.random.default_rng(rng_seed)
    margin = 0.5 * grid.resolution

    covered = np.zeros(free.shape[0], dtype=bool)
    regions: list[Polytope] = []
    while covered.mean() < 1.0 - coverage_threshold and len(regions) < max_regions:
        candidates = np.nonzero(~covered)[0]
        seed = free[rng.choice(candidates)]
        reg = _grow_region(seed, occupied, grid.bounds, margin)
        regions.append(reg)
        covered |= reg.contains(free)
    uncovered = 1.0 - float(covered.mean())
    status = STATUS_OK if uncovered <= coverage_threshold else STATUS_PARTIAL
    return RegionSet(tuple(regions), provenance="decomposed", status=status,
                     uncovered_fraction=uncovered)


def save_regions(path, region_set: RegionSet) -> None:
    """Region file: JSON array of {F, g, origin} records, full precision."""
    records = [reg.to_record() for reg in region_set]
    with open(path, "w") as fh:
        json.dump(records, fh, indent=1)


def load_regions(path) -> RegionSet:
    try:
        with open(path) as fh:
            records = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path}: malformed region file at line {exc.lineno}, "
            f"column {exc.colno}: {exc.msg}") from exc
    if not isinstance(records, list) or not records:
        raise ScenarioError(f"{path}: expected a nonempty JSON array of regions")
    regions = []
    for idx, rec in enumerate(records):
        try:
            regions.append(Polytope.from_record(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"{path}: region {idx}: {exc}") from exc
    return RegionSet(tuple(regions), provenance="loaded")
