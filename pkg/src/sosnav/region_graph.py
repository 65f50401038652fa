"""Adjacency graph over free regions, region-sequence search, and waypoint
allocation along the resulting reference polyline.

Two regions are adjacent when their intersection (the stacked halfspace
constraints of both) contains a ball of radius at least the overlap
threshold.  Edges carry the polyline through the three Chebyshev centers
[C(Q_i), C(Q_ij), C(Q_j)] and its length as cost.  A shortest region
sequence is found with Dijkstra, with endpoint edges tying the start and
goal positions to the centers of regions certified (via the scaling
program) to fully contain the robot there.  The polyline is then sampled
at T+1 equal arc-length waypoints, each assigned to the latest region in
the sequence that contains it; points in an overlap thus belong to the
upcoming region.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import AllocationGap, NoEnclosingRegion, Unreachable
from .freespace import RegionSet, grow_region
from .geometry import Configuration, Polytope, SemialgebraicShape, normalize_region
from .scaling import OPTIMAL, ScalingProblem, solve_min_scaling

CONTAIN_TOL = 1e-9
ALPHA_TOL = 1e-9


def region_center(region: Polytope) -> np.ndarray:
    """Chebyshev center in world coordinates (the frame origin after
    normalization)."""
    return region.frame_origin


def overlap_polytope(a: Polytope, b: Polytope) -> Polytope:
    """Intersection of two regions as a normalized polytope.

    Built by stacking the world-frame halfspaces of both; raises if the
    intersection is empty or degenerate.
    """
    Fa, ga = a.world_halfspaces()
    Fb, gb = b.world_halfspaces()
    return normalize_region(np.vstack([Fa, Fb]), np.concatenate([ga, gb]))


@dataclass(frozen=True)
class Edge:
    overlap: Polytope
    polyline: np.ndarray    # (3, dim): [C_i, C_ij, C_j]
    cost: float


@dataclass(frozen=True)
class RegionGraph:
    regions: tuple[Polytope, ...]
    edges: dict              # {(i, j) with i < j: Edge}
    overlap_threshold: float

    @property
    def vertices(self) -> tuple[int, ...]:
        return tuple(range(len(self.regions)))

    def neighbors(self, i: int) -> tuple[int, ...]:
        out = [j for (a, b) in self.edges for j in ((b,) if a == i else (a,) if b == i else ())]
        return tuple(sorted(out))

    def edge(self, i: int, j: int) -> Edge:
        return self.edges[(i, j) if i < j else (j, i)]

    def edge_polyline(self, i: int, j: int) -> np.ndarray:
        """Edge geometry oriented for traversal from region i to region j."""
        pl = self.edge(i, j).polyline
        return pl if i < j else pl[::-1]


def build_graph(regions: RegionSet, overlap_threshold: float) -> RegionGraph:
    """Edges between every pair of regions whose intersection admits an
    inscribed ball of radius >= overlap_threshold."""
    if overlap_threshold <= 0:
        raise ValueError("overlap_threshold must be positive")
    regs = tuple(regions)
    edges = {}
    for i in range(len(regs)):
        for j in range(i + 1, len(regs)):
            try:
                ov = overlap_polytope(regs[i], regs[j])
            except Exception:
                continue    # empty or degenerate intersection
            # normalize_region rejects radius <= 1e-9; threshold gates here
            _, radius = _inscribed(ov)
            if radius < overlap_threshold:
                continue
            pl = np.vstack([region_center(regs[i]), region_center(ov),
                            region_center(regs[j])])
            cost = float(np.linalg.norm(pl[1] - pl[0]) + np.linalg.norm(pl[2] - pl[1]))
            edges[(i, j)] = Edge(ov, pl, cost)
    return RegionGraph(regs, edges, float(overlap_threshold))


def _inscribed(region: Polytope) -> tuple[np.ndarray, float]:
    # rows are unit length, so g_i is the distance from the origin to facet i
    return region.frame_origin, float(np.min(region.g))


def containing_regions(graph: RegionGraph, q: Configuration,
                       shape: SemialgebraicShape,
                       problems: dict | None = None) -> list[int]:
    """Indices of regions certified to contain the whole robot at q."""
    out = []
    for i, reg in enumerate(graph.regions):
        if problems is not None and i in problems:
            prob = problems[i]
        else:
            prob = ScalingProblem(shape, reg)
            if problems is not None:
                problems[i] = prob
        sol = solve_min_scaling(prob, q)
        if sol.status == OPTIMAL and sol.alpha <= 1.0 + ALPHA_TOL:
            out.append(i)
    return out


@dataclass(frozen=True)
class PathResult:
    region_sequence: tuple[int, ...]
    sequence_regions: tuple[Polytope, ...]
    polyline: np.ndarray       # (n_pts, dim), starts at q_s, ends at q_g
    total_length: float


def shortest_sequence(graph: RegionGraph, q_s: Configuration,
                      q_g: Configuration, shape: SemialgebraicShape) -> PathResult:
    """Minimum-length region sequence from start to goal.

    Virtual endpoint edges connect the start/goal positions to the centers
    of every region that fully contains the robot there.  Ties are broken
    toward the lexicographically smallest region index sequence.
    """
    problems: dict = {}
    starts = containing_regions(graph, q_s, shape, problems)
    if not starts:
        raise NoEnclosingRegion("no region fully contains the robot at the start")
    goals = set(containing_regions(graph, q_g, shape, problems))
    if not goals:
        raise NoEnclosingRegion("no region fully contains the robot at the goal")

    p_s = q_s.position
    p_g = q_g.position
    # Dijkstra over regions plus a virtual goal node (-1); heap entries carry
    # the region sequence so equal-cost pops resolve lexicographically.
    heap = []
    for i in starts:
        d = float(np.linalg.norm(region_center(graph.regions[i]) - p_s))
        heapq.heappush(heap, (d, (i,)))
    best_seq = None
    settled = set()
    while heap:
        dist, seq = heapq.heappop(heap)
        node = seq[-1]
        if node == -1:
            best_seq = seq[:-1]
            break
        if node in settled:
            continue
        settled.add(node)
        if node in goals:
            d_goal = float(np.linalg.norm(region_center(graph.regions[node]) - p_g))
            heapq.heappush(heap, (dist + d_goal, seq + (-1,)))
        for nb in graph.neighbors(node):
            if nb not in settled:
                heapq.heappush(heap, (dist + graph.edge(node, nb).cost, seq + (nb,)))
    if best_seq is None:
        raise Unreachable("no region path connects the start to the goal")

    pts = [p_s, region_center(graph.regions[best_seq[0]])]
    for a, b in zip(best_seq, best_seq[1:]):
        ov = graph.edge(a, b).overlap
        pts.append(region_center(ov))
        pts.append(region_center(graph.regions[b]))
    pts.append(p_g)
    polyline = np.vstack(pts)
    total = float(np.sum(np.linalg.norm(np.diff(polyline, axis=0), axis=1)))
    return PathResult(best_seq, tuple(graph.regions[i] for i in best_seq),
                      polyline, total)


@dataclass(frozen=True)
class Allocation:
    points: np.ndarray          # (T+1, dim) reference points on the polyline
    region_index: tuple[int, ...]

    def __len__(self) -> int:
        return self.points.shape[0]

    def to_records(self) -> list[dict]:
        return [{"tau": t, "point": self.points[t].tolist(),
                 "region_index": int(self.region_index[t])}
                for t in range(len(self))]


def _sample_polyline(polyline: np.ndarray, count: int) -> np.ndarray:
    seg = np.linalg.norm(np.diff(polyline, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        raise ValueError("polyline has zero length")
    targets = np.linspace(0.0, total, count)
    out = np.empty((count, polyline.shape[1]))
    for t, s in enumerate(targets):
        k = min(np.searchsorted(cum, s, side="right") - 1, len(seg) - 1)
        w = 0.0 if seg[k] == 0 else (s - cum[k]) / seg[k]
        out[t] = (1 - w) * polyline[k] + w * polyline[k + 1]
    return out


def _assign_latest(points: np.ndarray, sequence: tuple[int, ...],
                   seq_regions) -> tuple[int, ...]:
    """Assign each point to the last region of the sequence containing it."""
    assigned = []
    for t, p in enumerate(points):
        hit = None
        for pos, reg in enumerate(seq_regions):
            if reg.contains(p, margin=CONTAIN_TOL):
                hit = pos
        if hit is None:
            raise AllocationGap(t, p, "reference point lies in no sequence region")
        assigned.append(sequence[hit])
    return tuple(assigned)


def allocate_waypoints(path: PathResult, T: int) -> Allocation:
    """T+1 reference points at equal arc-length spacing, each assigned to
    the latest containing region of the sequence."""
    if T < 1:
        raise ValueError("horizon T must be at least 1")
    points = _sample_polyline(path.polyline, T + 1)
    assigned = _assign_latest(points, path.region_sequence, path.sequence_regions)
    return Allocation(points, assigned)


def _chord_gap(a: Polytope, b: Polytope, samples: int = 65) -> bool:
    """True when some point of the center-to-center chord lies in neither
    region."""
    w = np.linspace(0.0, 1.0, samples)[:, None]
    pts = (1 - w) * region_center(a) + w * region_center(b)
    inside = a.contains(pts, margin=CONTAIN_TOL) | b.contains(pts, margin=CONTAIN_TOL)
    return not bool(np.all(inside))


def insert_transition_regions(path: PathResult, allocation: Allocation,
                              regions: RegionSet, grid=None):
    """Append a region at the overlap center wherever the direct chord
    between consecutive region centers leaves their union, and reassign the
    waypoints that fall inside the appended regions.

    With an occupancy grid the new region is grown from the overlap center
    by the decomposition step; without one the overlap polytope itself is
    used (it is obstacle-free, being the intersection of two regions).
    Returns the augmented region set and the updated allocation.
    """
    seq = list(path.region_sequence)
    seq_regions = list(path.sequence_regions)
    all_regions = list(regions)
    added = False
    pos = 0
    while pos + 1 < len(seq):
        a, b = seq_regions[pos], seq_regions[pos + 1]
        if not _chord_gap(a, b):
            pos += 1
            continue
        ov = overlap_polytope(a, b)
        new_reg = grow_region(grid, region_center(ov)) if grid is not None else ov
        new_idx = len(all_regions)
        all_regions.append(new_reg)
        seq.insert(pos + 1, new_idx)
        seq_regions.insert(pos + 1, new_reg)
        added = True
        pos += 2    # skip past the inserted region
    if not added:
        return regions, allocation
    assigned = _assign_latest(allocation.points, tuple(seq), seq_regions)
    augmented = RegionSet(tuple(all_regions), provenance=regions.provenance,
                          status=regions.status,
                          uncovered_fraction=regions.uncovered_fraction)
    return augmented, Allocation(allocation.points, assigned)
