"""Regenerate the bundled scenario fixtures.

The fixtures are committed JSON; this script exists so their geometry can
be rebuilt or tweaked reproducibly.  Obstacle layouts are hand-placed
except for the twenty-obstacle map, which is drawn from a fixed seed and
frozen.
"""

import json
import math
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parent.parent / "src" / "sosnav" / "scenarios"


def base(name, bounds, resolution, dynamics, start, goal, horizon, robot,
         obstacles, Q, R, Q_T, **extra):
    data = {
        "schema": 1,
        "name": name,
        "workspace": {"bounds": bounds, "resolution": resolution},
        "obstacles": obstacles,
        "robot": robot,
        "dynamics": dynamics,
        "start": start,
        "goal": goal,
        "horizon": horizon,
        "weights": {"Q": Q, "R": R, "Q_T": Q_T},
        "ctol": 1e-4,
        "seed": 0,
    }
    data.update(extra)
    return data


def boxobs(lo, hi):
    return {"type": "box", "min": lo, "max": hi}


Q2 = [0.5, 0.5, 0.01]
QT2 = [8.0, 8.0, 0.1]
R2 = [0.05, 0.05]

scenarios = {}

scenarios["empty_room"] = base(
    "empty_room", [[0.0, 5.0], [0.0, 5.0]], 0.25,
    {"kind": "planar_unicycle", "dt": 0.1},
    [0.8, 0.8, 0.5], [4.2, 4.2, 0.5], 30,
    {"kind": "box", "params": {"half_extents": [0.3, 0.2]}},
    [], Q2, R2, QT2)

scenarios["narrow_gap"] = base(
    "narrow_gap", [[0.0, 6.0], [0.0, 4.0]], 0.1,
    {"kind": "planar_double_integrator", "dt": 0.1},
    [0.8, 2.0, 0.0], [5.2, 2.0, 0.0], 40,
    {"kind": "box", "params": {"half_extents": [0.22, 0.16]}},
    [boxobs([2.6, 0.0], [3.4, 1.7]), boxobs([2.6, 2.3], [3.4, 4.0])],
    [0.5, 0.5, 0.05, 0.05], R2, [8.0, 8.0, 0.5, 0.5],
    coverage_threshold=0.01)

scenarios["l_corridor"] = base(
    "l_corridor", [[0.0, 6.0], [0.0, 6.0]], 0.125,
    {"kind": "planar_unicycle", "dt": 0.1},
    [0.6, 5.4, -math.pi / 2], [5.4, 0.6, 0.0], 40,
    {"kind": "box", "params": {"half_extents": [0.25, 0.18]}},
    [boxobs([1.25, 1.25], [6.0, 6.0])], Q2, R2, QT2)

scenarios["small_maze"] = base(
    "small_maze", [[0.0, 8.0], [0.0, 8.0]], 0.2,
    {"kind": "planar_unicycle", "dt": 0.1},
    [0.7, 0.7, math.pi / 2], [7.3, 0.7, -math.pi / 2], 50,
    {"kind": "ellipsoid", "params": {"semi_axes": [0.25, 0.18]}},
    [boxobs([1.5, 0.0], [1.9, 5.5]),
     boxobs([3.5, 2.5], [3.9, 8.0]),
     boxobs([5.5, 0.0], [5.9, 5.5])],
    Q2, R2, QT2)

scenarios["pillar_field"] = base(
    "pillar_field", [[0.0, 6.0], [0.0, 6.0], [0.0, 3.0]], 0.5,
    {"kind": "spatial_yaw_kinematic", "dt": 0.1},
    [0.8, 0.8, 1.0, 0.0], [5.2, 5.2, 2.0, 0.0], 40,
    {"kind": "cylinder", "params": {"radius": 0.3, "half_height": 0.4}},
    [boxobs([1.5, 1.5, 0.0], [2.3, 2.3, 3.0]),
     boxobs([3.5, 1.0, 0.0], [4.3, 1.8, 3.0]),
     boxobs([2.0, 3.8, 0.0], [2.8, 4.6, 3.0]),
     boxobs([4.2, 3.6, 0.0], [5.0, 4.4, 3.0])],
    [0.5, 0.5, 0.5, 0.01], [0.05] * 4, [8.0, 8.0, 8.0, 0.1])

# Twenty axis-aligned obstacles on a 10 x 10 floor, drawn once from a fixed
# seed with a spacing check so corridors stay passable, then frozen.
rng = np.random.default_rng(7)
obs, centers = [], []
while len(obs) < 20:
    c = rng.uniform(1.0, 9.0, size=2)
    half = rng.uniform(0.25, 0.55, size=2)
    if centers and np.min(np.linalg.norm(np.array(centers) - c, axis=1)) < 1.6:
        continue
    if np.linalg.norm(c - [0.6, 0.6]) < 1.5 or np.linalg.norm(c - [9.4, 9.4]) < 1.5:
        continue
    centers.append(c)
    obs.append(boxobs(np.round(c - half, 3).tolist(),
                      np.round(c + half, 3).tolist()))

scenarios["twenty_obstacles"] = base(
    "twenty_obstacles", [[0.0, 10.0], [0.0, 10.0]], 0.125,
    {"kind": "planar_unicycle", "dt": 0.1},
    [0.6, 0.6, 0.0], [9.4, 9.4, 0.8], 60,
    {"kind": "box", "params": {"half_extents": [0.2, 0.15]}},
    obs, Q2, R2, QT2, coverage_threshold=0.04)

OUT.mkdir(parents=True, exist_ok=True)
for name, data in scenarios.items():
    path = OUT / f"{name}.json"
    path.write_text(json.dumps(data, indent=1) + "\n")
    print("wrote", path)
