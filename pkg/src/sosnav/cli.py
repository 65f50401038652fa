"""End-to-end pipeline driver and artifact tooling.

Three subcommands:

``plan``     decompose the map, route a region sequence, allocate waypoints,
             optimize a certified trajectory, and write artifacts.
``certify``  solve one containment certificate at a given configuration and
             print the scaling, its gradient, and the solve time.
``plot``     render saved plan artifacts to a static SVG.

Every pipeline failure maps to a distinct exit code so batch harnesses can
tell parse errors from geometric dead ends from optimizer non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from . import trajopt
from .errors import (AllocationGap, DecompositionError, NoEnclosingRegion,
                     ScenarioError, SolverFailure, Unreachable)
from .freespace import (RegionSet, STATUS_OK, decompose, load_regions,
                        obstacle_from_record, rasterize, save_regions)
from .geometry import (Configuration, PLANAR, SPATIAL, Polytope,
                       SemialgebraicShape, make_primitive, normalize_region,
                       pose_from_config, sample_boundary, shape_from_records)
from .region_graph import (allocate_waypoints, build_graph,
                           insert_transition_regions, shortest_sequence)
from .scaling import OPTIMAL, ScalingProblem, gradient, solve_min_scaling

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_PARSE = 2
EXIT_DECOMPOSITION = 3
EXIT_NO_ENCLOSING = 4
EXIT_UNREACHABLE = 5
EXIT_NONCONVERGENCE = 6

_DYNAMICS_KINDS = (trajopt.PLANAR_UNICYCLE, trajopt.PLANAR_DOUBLE_INTEGRATOR,
                   trajopt.SPATIAL_YAW_KINEMATIC)


# ---------------------------------------------------------------------------
# Scenario schema


@dataclass(frozen=True)
class Scenario:
    """Validated plan inputs; ``raw`` keeps the resolved JSON for artifacts."""

    name: str
    bounds: np.ndarray            # (dim, 2) workspace box
    resolution: float
    obstacle_records: tuple
    shape: SemialgebraicShape
    dynamics_kind: str
    dt: float
    start: np.ndarray             # configuration (x, y, theta) or (x, y, z, yaw)
    goal: np.ndarray
    horizon: int
    Q: np.ndarray
    R: np.ndarray
    Q_T: np.ndarray
    input_bounds: tuple | None    # (lo, hi) arrays or None
    ctol: float
    seed: int
    threads: int | None
    relaxation_order: int | None
    coverage_threshold: float
    overlap_threshold: float
    regions_file: str | None
    explicit_region: Polytope | None
    raw: dict

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def config_tag(self) -> str:
        return PLANAR if self.dim == 2 else SPATIAL


def _need(data: dict, key: str):
    if key not in data:
        raise ScenarioError(f"scenario is missing required field {key!r}")
    return data[key]


def _as_weight(value, n: int, name: str) -> np.ndarray:
    w = np.asarray(value, dtype=float)
    if w.ndim == 1:
        if w.shape[0] != n:
            raise ScenarioError(f"{name} has length {w.shape[0]}, expected {n}")
        return np.diag(w)
    if w.shape != (n, n):
        raise ScenarioError(f"{name} has shape {w.shape}, expected ({n}, {n})")
    return w


def _shape_from_spec(rec: dict, dim: int) -> SemialgebraicShape:
    if "kind" in rec:
        shape = make_primitive(rec["kind"], rec.get("params", {}))
    elif "inequalities" in rec:
        shape = shape_from_records(rec["inequalities"], int(_need(rec, "dimension")),
                                  float(_need(rec, "bounding_radius")))
    else:
        raise ScenarioError("robot spec needs either 'kind' or 'inequalities'")
    if shape.dimension != dim:
        raise ScenarioError(f"robot is {shape.dimension}-dimensional but the "
                            f"workspace is {dim}-dimensional")
    return shape


def parse_scenario(data: dict) -> Scenario:
    """Validate a scenario dictionary against the versioned schema."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario root must be a JSON object")
    version = _need(data, "schema")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema version {version!r}, "
                            f"this build reads {SCHEMA_VERSION}")
    ws = _need(data, "workspace")
    bounds = np.asarray(_need(ws, "bounds"), dtype=float)
    if bounds.ndim != 2 or bounds.shape[1] != 2 or bounds.shape[0] not in (2, 3):
        raise ScenarioError("workspace.bounds must be a (dim, 2) array, dim 2 or 3")
    if not np.all(bounds[:, 1] > bounds[:, 0]):
        raise ScenarioError("workspace.bounds must satisfy hi > lo per axis")
    resolution = float(_need(ws, "resolution"))
    if resolution <= 0:
        raise ScenarioError("workspace.resolution must be positive")
    dim = bounds.shape[0]

    dyn = _need(data, "dynamics")
    kind = _need(dyn, "kind")
    if kind not in _DYNAMICS_KINDS:
        raise ScenarioError(f"unknown dynamics kind {kind!r}, "
                            f"expected one of {_DYNAMICS_KINDS}")
    dt = float(dyn.get("dt", 0.1))
    if dt <= 0:
        raise ScenarioError("dynamics.dt must be positive")
    needs_dim = 3 if kind == trajopt.SPATIAL_YAW_KINEMATIC else 2
    if dim != needs_dim:
        raise ScenarioError(f"dynamics {kind!r} needs a {needs_dim}-dimensional "
                            f"workspace, got {dim}")

    cfg_len = dim + 1
    start = np.asarray(_need(data, "start"), dtype=float)
    goal = np.asarray(_need(data, "goal"), dtype=float)
    for label, cfg in (("start", start), ("goal", goal)):
        if cfg.shape != (cfg_len,):
            raise ScenarioError(f"{label} must have {cfg_len} entries "
                                f"(position plus heading)")
        pos = cfg[:dim]
        if np.any(pos < bounds[:, 0]) or np.any(pos > bounds[:, 1]):
            raise ScenarioError(f"{label} position {pos.tolist()} is outside "
                                f"the workspace bounds")

    horizon = int(_need(data, "horizon"))
    if horizon < 1:
        raise ScenarioError("horizon must be at least 1")

    shape = _shape_from_spec(_need(data, "robot"), dim)
    model = trajopt.make_model(kind, dt)
    weights = _need(data, "weights")
    Q = _as_weight(_need(weights, "Q"), model.state_dim, "weights.Q")
    R = _as_weight(_need(weights, "R"), model.input_dim, "weights.R")
    Q_T = _as_weight(_need(weights, "Q_T"), model.state_dim, "weights.Q_T")

    input_bounds = None
    if "input_bounds" in data and data["input_bounds"] is not None:
        ib = data["input_bounds"]
        lo = np.asarray(_need(ib, "lo"), dtype=float)
        hi = np.asarray(_need(ib, "hi"), dtype=float)
        if lo.shape != (model.input_dim,) or hi.shape != (model.input_dim,):
            raise ScenarioError(f"input_bounds must have {model.input_dim} entries")
        if not np.all(hi > lo):
            raise ScenarioError("input_bounds must satisfy hi > lo componentwise")
        input_bounds = (lo, hi)

    explicit = None
    if "region" in data and data["region"] is not None:
        reg = data["region"]
        try:
            explicit = normalize_region(np.asarray(_need(reg, "F"), dtype=float),
                                        np.asarray(_need(reg, "g"), dtype=float))
        except ValueError as exc:
            raise ScenarioError(f"explicit region is invalid: {exc}") from exc

    threads = data.get("threads")
    return Scenario(
        name=str(data.get("name", "unnamed")),
        bounds=bounds,
        resolution=resolution,
        obstacle_records=tuple(data.get("obstacles", [])),
        shape=shape,
        dynamics_kind=kind,
        dt=dt,
        start=start,
        goal=goal,
        horizon=horizon,
        Q=Q, R=R, Q_T=Q_T,
        input_bounds=input_bounds,
        ctol=float(data.get("ctol", 1e-4)),
        seed=int(data.get("seed", 0)),
        threads=int(threads) if threads is not None else None,
        relaxation_order=(int(data["relaxation_order"])
                          if data.get("relaxation_order") is not None else None),
        coverage_threshold=float(data.get("coverage_threshold", 0.05)),
        overlap_threshold=float(data.get("overlap_threshold", 0.05)),
        regions_file=data.get("regions_file"),
        explicit_region=explicit,
        raw=data,
    )


_OVERRIDE_KEYS = ("horizon", "ctol", "seed", "threads", "relaxation_order",
                  "coverage_threshold", "overlap_threshold")


def load_scenario(path, overrides: dict | None = None) -> Scenario:
    """Read, override, and validate a scenario file; flag values win."""
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {p}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario {p} is not valid JSON: line "
                            f"{exc.lineno} column {exc.colno}: {exc.msg}") from exc
    for key, val in (overrides or {}).items():
        if val is not None:
            if key not in _OVERRIDE_KEYS:
                raise ScenarioError(f"unknown override {key!r}")
            data[key] = val
    return parse_scenario(data)


# ---------------------------------------------------------------------------
# plan


def _lift_config(scn: Scenario, cfg: np.ndarray, model) -> np.ndarray:
    if model.kind == trajopt.PLANAR_DOUBLE_INTEGRATOR:
        return np.array([cfg[0], cfg[1], 0.0, 0.0])
    return np.array(cfg, dtype=float)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1) + "\n")


def _write_trajectory_csv(path: Path, traj: trajopt.Trajectory) -> None:
    nx = traj.X.shape[1]
    nu = traj.U.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau"] + [f"x{i}" for i in range(nx)]
               + [f"u{i}" for i in range(nu)] + ["alpha"])
    for t in range(traj.X.shape[0]):
        u = [repr(float(v)) for v in traj.U[t]] if t < traj.U.shape[0] else [""] * nu
        w.writerow([t] + [repr(float(v)) for v in traj.X[t]] + u
                   + [repr(float(traj.alphas[t]))])
    path.write_text(buf.getvalue())


def cmd_plan(scenario_path, out_dir, overrides: dict | None = None) -> int:
    """Run the full pipeline and write artifacts; exit code reports the stage
    that failed, 0 on a certified success."""
    try:
        scn = load_scenario(scenario_path, overrides)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_PARSE

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    t_total = time.perf_counter()

    # Map processing: rasterize and decompose (or ingest) free regions.
    t0 = time.perf_counter()
    try:
        obstacles = [obstacle_from_record(r) for r in scn.obstacle_records]
        grid = rasterize(obstacles, scn.bounds, scn.resolution)
        if scn.regions_file:
            region_set = load_regions(Path(scenario_path).parent / scn.regions_file)
        else:
            region_set = decompose(grid, coverage_threshold=scn.coverage_threshold,
                                   rng_seed=scn.seed)
    except (ScenarioError, ValueError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DecompositionError as exc:
        print(f"decomposition error: {exc}", file=sys.stderr)
        return EXIT_DECOMPOSITION
    timings["map_processing"] = time.perf_counter() - t0
    if region_set.status != STATUS_OK:
        print(f"decomposition error: coverage target missed, uncovered "
              f"fraction {region_set.uncovered_fraction:.4f}", file=sys.stderr)
        return EXIT_DECOMPOSITION

    t0 = time.perf_counter()
    graph = build_graph(region_set, scn.overlap_threshold)
    timings["graph"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    q_s = Configuration(scn.start, scn.config_tag)
    q_g = Configuration(scn.goal, scn.config_tag)
    try:
        path = shortest_sequence(graph, q_s, q_g, scn.shape)
        allocation = allocate_waypoints(path, scn.horizon)
        regions, allocation = insert_transition_regions(path, allocation,
                                                        region_set, grid)
    except NoEnclosingRegion as exc:
        print(f"no enclosing region: {exc}", file=sys.stderr)
        return EXIT_NO_ENCLOSING
    except Unreachable as exc:
        print(f"unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except AllocationGap as exc:
        print(f"allocation gap: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED
    timings["allocation"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    model = trajopt.make_model(scn.dynamics_kind, scn.dt)
    x_ref = trajopt.make_reference(model, allocation.points,
                                   start_state=_lift_config(scn, scn.start, model))
    spec = trajopt.ProblemSpec(
        model=model, T=scn.horizon, x_ref=x_ref,
        goal=_lift_config(scn, scn.goal, model),
        Q=scn.Q, R=scn.R, Q_T=scn.Q_T,
        u_min=scn.input_bounds[0] if scn.input_bounds else None,
        u_max=scn.input_bounds[1] if scn.input_bounds else None,
        shape=scn.shape,
        region_table=tuple(regions),
        region_index=allocation.region_index)
    try:
        problems = trajopt.build_problems(spec, scn.relaxation_order)
        traj = trajopt.solve(spec, problems, ctol=scn.ctol, threads=scn.threads)
    except SolverFailure as exc:
        print(f"optimizer failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    timings["optimization"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t_total

    _write_json(out / "scenario.json", scn.raw)
    save_regions(out / "regions.json", regions)
    _write_json(out / "allocation.json", {
        "region_sequence": list(path.region_sequence),
        "polyline": path.polyline.tolist(),
        "total_length": path.total_length,
        "waypoints": allocation.to_records(),
    })
    _write_json(out / "trajectory.json", traj.to_records())
    _write_json(out / "timings.json", timings)
    _write_trajectory_csv(out / "trajectory.csv", traj)
    try:
        render_artifacts(out, out / "plot.svg")
    except (ScenarioError, ValueError) as exc:
        print(f"plot warning: {exc}", file=sys.stderr)

    stage_line = "  ".join(f"{k}={v * 1e3:.1f}ms" for k, v in timings.items())
    print(f"{scn.name}: status={traj.status} violation={traj.violation:.3e} "
          f"cost={traj.cost:.4f} outer={traj.outer_iterations}")
    print(stage_line)
    if not traj.success:
        print("optimizer did not reach the violation tolerance", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


# ---------------------------------------------------------------------------
# certify


def _parse_config(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ScenarioError(f"configuration {text!r} is not numeric") from exc
    if len(vals) not in (3, 4):
        raise ScenarioError("configuration needs 3 entries (x, y, theta) "
                            "or 4 (x, y, z, yaw)")
    return np.array(vals)


def cmd_certify(scenario_path, config_text: str,
                overrides: dict | None = None) -> int:
    """Certify one configuration against an explicit or containing region."""
    try:
        scn = load_scenario(scenario_path, overrides)
        q_vec = _parse_config(config_text)
        if q_vec.shape[0] != scn.dim + 1:
            raise ScenarioError(f"configuration has {q_vec.shape[0]} entries, "
                                f"workspace dimension {scn.dim} needs {scn.dim + 1}")
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    q = Configuration(q_vec, scn.config_tag)

    if scn.explicit_region is not None:
        region = scn.explicit_region
    else:
        try:
            obstacles = [obstacle_from_record(r) for r in scn.obstacle_records]
            grid = rasterize(obstacles, scn.bounds, scn.resolution)
            region_set = decompose(grid, coverage_threshold=scn.coverage_threshold,
                                   rng_seed=scn.seed)
        except DecompositionError as exc:
            print(f"decomposition error: {exc}", file=sys.stderr)
            return EXIT_DECOMPOSITION
        region = _best_containing(region_set, scn.shape, q, scn.relaxation_order)
        if region is None:
            print("no enclosing region: no decomposed region certifies the "
                  "robot at the queried configuration", file=sys.stderr)
            return EXIT_NO_ENCLOSING

    problem = ScalingProblem(scn.shape, region,
                             relaxation_order=scn.relaxation_order)
    t0 = time.perf_counter()
    sol = solve_min_scaling(problem, q)
    grad = gradient(problem, q, sol) if sol.status == OPTIMAL else None
    elapsed_ms = (time.perf_counter() - t0) * 1e3
    record = {
        "alpha": sol.alpha,
        "gradient": grad.dalpha_dq.tolist() if grad is not None else None,
        "status": sol.status,
        "relaxation_order": problem.relaxation_order,
        "duality_gap": sol.gap,
        "timing_ms": elapsed_ms,
    }
    print(json.dumps(record, indent=1))
    return EXIT_OK if sol.status == OPTIMAL else EXIT_NONCONVERGENCE


def _best_containing(region_set: RegionSet, shape, q,
                     relaxation_order) -> Polytope | None:
    best, best_alpha = None, math.inf
    for region in region_set:
        sol = solve_min_scaling(
            ScalingProblem(shape, region, relaxation_order=relaxation_order), q)
        if sol.status == OPTIMAL and sol.alpha <= 1.0 + 1e-9 \
                and sol.alpha < best_alpha:
            best, best_alpha = region, sol.alpha
    return best


# ---------------------------------------------------------------------------
# plot


_N_DIRS = 48
_REGION_HUES = (205, 145, 30, 275, 95, 330, 60, 245, 170, 15)


def _support_point_body(shape: SemialgebraicShape, n: np.ndarray) -> np.ndarray:
    """Body-frame support point in direction n for the plot silhouette."""
    kind = shape.kind
    p = shape.params or {}
    if kind == "box":
        half = np.asarray(p["half_extents"], dtype=float)
        return np.where(n >= 0.0, half, -half)
    if kind == "ellipsoid":
        a = np.asarray(p["semi_axes"], dtype=float)
        an = a * n
        norm = np.linalg.norm(an)
        return np.zeros_like(n) if norm < 1e-12 else a * an / norm
    if kind == "cylinder":
        r, h = float(p["radius"]), float(p["half_height"])
        nxy = n[:2]
        nrm = np.linalg.norm(nxy)
        xy = r * nxy / nrm if nrm > 1e-12 else np.zeros(2)
        return np.array([xy[0], xy[1], h if n[2] >= 0 else -h])
    if kind == "elliptical_cone":
        a2, b2 = 2.0 * float(p["a"]), 2.0 * float(p["b"])
        h2 = 2.0 * float(p["height"])
        nxy = n[:2]
        nrm = math.hypot(a2 * nxy[0], b2 * nxy[1])
        if nrm > 1e-12:
            rim = np.array([a2 * a2 * nxy[0] / nrm, b2 * b2 * nxy[1] / nrm, h2])
        else:
            rim = np.array([0.0, 0.0, h2])
        apex = np.zeros(3)
        return rim if rim @ n >= apex @ n else apex
    # Generic body: support over cached boundary samples.
    pts = _generic_boundary(shape)
    return pts[np.argmax(pts @ n)]


_boundary_cache: dict[int, np.ndarray] = {}


def _generic_boundary(shape: SemialgebraicShape) -> np.ndarray:
    key = id(shape)
    if key not in _boundary_cache:
        _boundary_cache[key] = sample_boundary(shape, 512,
                                               np.random.default_rng(0))
    return _boundary_cache[key]


def _footprint(shape: SemialgebraicShape, q: Configuration,
               axes: tuple[int, int]) -> np.ndarray:
    """Projected silhouette polygon of the body at configuration q."""
    pose = pose_from_config(q)
    R, pos = pose.R, pose.p
    dim = shape.dimension
    pts = []
    for m in range(_N_DIRS):
        phi = 2.0 * math.pi * m / _N_DIRS
        d = np.zeros(dim)
        d[axes[0]], d[axes[1]] = math.cos(phi), math.sin(phi)
        w = R @ _support_point_body(shape, R.T @ d) + pos
        pts.append((w[axes[0]], w[axes[1]]))
    return np.array(pts)


def _polytope_outline(F: np.ndarray, g: np.ndarray, bounds: np.ndarray,
                      axes: tuple[int, int]) -> np.ndarray | None:
    """Projected outline via support LPs; bounds rows keep the LP bounded."""
    dim = F.shape[1]
    A = np.vstack([F, np.eye(dim), -np.eye(dim)])
    b = np.concatenate([g, bounds[:, 1], -bounds[:, 0]])
    pts = []
    for m in range(_N_DIRS):
        phi = 2.0 * math.pi * m / _N_DIRS
        c = np.zeros(dim)
        c[axes[0]], c[axes[1]] = -math.cos(phi), -math.sin(phi)
        res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * dim,
                      method="highs")
        if not res.success:
            return None
        pts.append((res.x[axes[0]], res.x[axes[1]]))
    return np.array(pts)


class _Panel:
    """One orthographic view with its own world-to-pixel transform."""

    def __init__(self, bounds: np.ndarray, axes: tuple[int, int],
                 x_off: float, size: float, pad: float):
        self.axes = axes
        self.lo = bounds[list(axes), 0]
        self.hi = bounds[list(axes), 1]
        extent = self.hi - self.lo
        self.scale = (size - 2 * pad) / float(extent.max())
        self.x_off = x_off + pad
        self.y_off = pad
        self.height = extent[1] * self.scale + 2 * pad
        self.width = extent[0] * self.scale + 2 * pad

    def to_px(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        x = self.x_off + (pts[:, 0] - self.lo[0]) * self.scale
        y = self.y_off + (self.hi[1] - pts[:, 1]) * self.scale
        return np.column_stack([x, y])


def _fmt_points(px: np.ndarray) -> str:
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in px)


def _render_panel(svg: list[str], panel: _Panel, data: dict,
                  label: str) -> None:
    bounds = np.asarray(data["scenario"]["workspace"]["bounds"], dtype=float)
    corner = panel.to_px(np.array([[bounds[panel.axes[0], 0],
                                    bounds[panel.axes[1], 1]]]))[0]
    svg.append(f'<rect x="{corner[0]:.2f}" y="{corner[1]:.2f}" '
               f'width="{(panel.hi[0] - panel.lo[0]) * panel.scale:.2f}" '
               f'height="{(panel.hi[1] - panel.lo[1]) * panel.scale:.2f}" '
               f'fill="#fcfcfa" stroke="#263238" stroke-width="1.5"/>')
    svg.append(f'<text x="{panel.x_off + 4:.2f}" y="{panel.y_off + 14:.2f}" '
               f'font-family="monospace" font-size="12" fill="#263238">'
               f'{label}</text>')

    for rec in data["scenario"].get("obstacles", []):
        if rec.get("type") == "box":
            lo = np.asarray(rec["min"], dtype=float)
            hi = np.asarray(rec["max"], dtype=float)
            i, j = panel.axes
            quad = np.array([[lo[i], lo[j]], [hi[i], lo[j]],
                             [hi[i], hi[j]], [lo[i], hi[j]]])
            px = panel.to_px(quad)
        else:
            F = np.asarray(rec["F"], dtype=float)
            g = np.asarray(rec["g"], dtype=float)
            outline = _polytope_outline(F, g, bounds, panel.axes)
            if outline is None:
                continue
            px = panel.to_px(outline)
        svg.append(f'<polygon points="{_fmt_points(px)}" fill="#455a64" '
                   f'stroke="none"/>')

    for idx, rec in enumerate(data["regions"]):
        F = np.asarray(rec["F"], dtype=float)
        g = np.asarray(rec["g"], dtype=float)
        origin = np.asarray(rec["origin"], dtype=float)
        outline = _polytope_outline(F, g + F @ origin, bounds, panel.axes)
        if outline is None:
            continue
        hue = _REGION_HUES[idx % len(_REGION_HUES)]
        px = panel.to_px(outline)
        svg.append(f'<polygon points="{_fmt_points(px)}" '
                   f'fill="hsl({hue},60%,60%)" fill-opacity="0.18" '
                   f'stroke="hsl({hue},55%,40%)" stroke-width="1"/>')

    poly = np.asarray(data["allocation"]["polyline"], dtype=float)
    px = panel.to_px(poly[:, list(panel.axes)])
    svg.append(f'<polyline points="{_fmt_points(px)}" fill="none" '
               f'stroke="#7b1fa2" stroke-width="1.2" '
               f'stroke-dasharray="5,4"/>')

    shape = data["shape"]
    states = np.asarray(data["trajectory"]["states"], dtype=float)
    tag = PLANAR if shape.dimension == 2 else SPATIAL
    cfg_len = shape.dimension + 1
    stride = max(1, states.shape[0] // 8)
    model_kind = data["scenario"]["dynamics"]["kind"]
    for t in range(0, states.shape[0], stride):
        q = _state_to_config(states[t], model_kind, tag, cfg_len)
        foot = _footprint(shape, q, panel.axes)
        px = panel.to_px(foot)
        svg.append(f'<polygon points="{_fmt_points(px)}" '
                   f'fill="#1565c0" fill-opacity="0.10" '
                   f'stroke="#1565c0" stroke-width="0.8"/>')

    px = panel.to_px(states[:, list(panel.axes)])
    svg.append(f'<polyline points="{_fmt_points(px)}" fill="none" '
               f'stroke="#c62828" stroke-width="2"/>')
    for pt, color in ((px[0], "#2e7d32"), (px[-1], "#c62828")):
        svg.append(f'<circle cx="{pt[0]:.2f}" cy="{pt[1]:.2f}" r="4" '
                   f'fill="{color}"/>')


def _state_to_config(x: np.ndarray, model_kind: str, tag: str,
                     cfg_len: int) -> Configuration:
    if model_kind == trajopt.PLANAR_DOUBLE_INTEGRATOR:
        return Configuration(np.array([x[0], x[1], 0.0]), tag)
    return Configuration(x[:cfg_len], tag)


def render_artifacts(artifact_dir, out_svg) -> None:
    """Static SVG from saved plan artifacts; byte output is deterministic."""
    art = Path(artifact_dir)
    data: dict = {}
    for name in ("scenario", "regions", "allocation", "trajectory"):
        f = art / f"{name}.json"
        if not f.exists():
            raise ScenarioError(f"missing artifact: {f}")
        data[name] = json.loads(f.read_text())
    dim = len(data["scenario"]["workspace"]["bounds"])
    data["shape"] = _shape_from_spec(data["scenario"]["robot"], dim)
    bounds = np.asarray(data["scenario"]["workspace"]["bounds"], dtype=float)

    size, pad = 640.0, 24.0
    panels = [(_Panel(bounds, (0, 1), 0.0, size, pad), "xy")]
    if dim == 3:
        panels.append((_Panel(bounds, (0, 2), panels[0][0].width, size, pad),
                       "xz"))
    width = sum(p.width for p, _ in panels)
    height = max(p.height for p, _ in panels)
    svg = [f'<svg xmlns="http://www.w3.org/2000/svg" '
           f'viewBox="0 0 {width:.2f} {height:.2f}" '
           f'width="{width:.2f}" height="{height:.2f}">',
           f'<rect x="0" y="0" width="{width:.2f}" height="{height:.2f}" '
           f'fill="#ffffff"/>']
    for panel, label in panels:
        _render_panel(svg, panel, data, label)
    svg.append("</svg>")
    Path(out_svg).write_text("\n".join(svg) + "\n")


def cmd_plot(artifact_dir, out_svg) -> int:
    try:
        render_artifacts(artifact_dir, out_svg)
    except ScenarioError as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--ctol", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--relaxation-order", type=int, default=None,
                   dest="relaxation_order")
    p.add_argument("--coverage-threshold", type=float, default=None,
                   dest="coverage_threshold")
    p.add_argument("--overlap-threshold", type=float, default=None,
                   dest="overlap_threshold")


def _overrides(args: argparse.Namespace) -> dict:
    return {k: getattr(args, k) for k in _OVERRIDE_KEYS if hasattr(args, k)}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sosnav",
        description="Certified collision-free trajectory optimization")
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="run the full planning pipeline")
    p_plan.add_argument("scenario")
    p_plan.add_argument("out_dir")
    _add_overrides(p_plan)

    p_cert = sub.add_parser("certify", help="certify one configuration")
    p_cert.add_argument("scenario")
    p_cert.add_argument("--config", required=True,
                        help="comma-separated configuration, e.g. '1.0,2.0,0.3'")
    _add_overrides(p_cert)

    p_plot = sub.add_parser("plot", help="render plan artifacts to SVG")
    p_plot.add_argument("artifact_dir")
    p_plot.add_argument("out_svg")

    args = parser.parse_args(argv)
    if args.command == "plan":
        return cmd_plan(args.scenario, args.out_dir, _overrides(args))
    if args.command == "certify":
        return cmd_certify(args.scenario, args.config, _overrides(args))
    return cmd_plot(args.artifact_dir, args.out_svg)


if __name__ == "__main__":
    sys.exit(main())
