"""Maze geometry files.

A maze is a JSON document::

    {
      "schema": "tankguard.maze/1",
      "name": "canonical",
      "walls": [[xmin, ymin, xmax, ymax], ...],
      "obstacles": [{"center": [x, y], "radius": r, "mass": m}, ...],
      "start": [x, y],
      "goal": [x, y],
      "goal_radius": 0.02,
      "episode_limit": 300,
      "spawn_points": [[x, y], ...]
    }

Lengths are meters, masses kilograms. ``spawn_points`` are the poses used
for offline data collection.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

SCHEMA = "tankguard.maze/1"
BUILTIN = ("canonical", "corridor")


@dataclass(frozen=True)
class Obstacle:
    center: tuple
    radius: float
    mass: float


@dataclass(frozen=True)
class MazeSpec:
    name: str
    walls: tuple
    obstacles: tuple
    start: tuple
    goal: tuple
    goal_radius: float = 0.02
    episode_limit: int = 300
    spawn_points: tuple = field(default=())

    def __post_init__(self):
        vals = [v for w in self.walls for v in w] + list(self.start) + list(self.goal)
        vals += [v for o in self.obstacles for v in (*o.center, o.radius, o.mass)]
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"maze {self.name!r} has non-finite geometry")
        for w in self.walls:
            if not (w[0] < w[2] and w[1] < w[3]):
                raise ValueError(f"maze {self.name!r}: degenerate wall {w}")
        for o in self.obstacles:
            if o.radius <= 0 or o.mass <= 0:
                raise ValueError(f"maze {self.name!r}: obstacle needs positive radius and mass")
        for label, pt in (("start", self.start), ("goal", self.goal)):
            if not self.is_free(pt, 0.0):
                raise ValueError(f"maze {self.name!r}: {label} {pt} is inside a wall")

    def wall_array(self):
        return np.array(self.walls, dtype=float).reshape(-1, 4)

    def obstacle_arrays(self):
        """(state[n, 4] = x, y, vx, vy), radii[n], masses[n]."""
        n = len(self.obstacles)
        state = np.zeros((n, 4))
        for i, o in enumerate(self.obstacles):
            state[i, :2] = o.center
        radii = np.array([o.radius for o in self.obstacles], dtype=float)
        masses = np.array([o.mass for o in self.obstacles], dtype=float)
        return state, radii, masses

    def is_free(self, pt, radius):
        """True if a disc of ``radius`` at ``pt`` does not overlap any wall."""
        x, y = pt
        for x0, y0, x1, y1 in self.walls:
            cx = min(max(x, x0), x1)
            cy = min(max(y, y0), y1)
            if (x - cx) ** 2 + (y - cy) ** 2 < radius * radius or (x0 < x < x1 and y0 < y < y1):
                return False
        return True

    def to_dict(self):
        return {
            "schema": SCHEMA,
            "name": self.name,
            "walls": [list(w) for w in self.walls],
            "obstacles": [{"center": list(o.center), "radius": o.radius, "mass": o.mass} for o in self.obstacles],
            "start": list(self.start),
            "goal": list(self.goal),
            "goal_radius": self.goal_radius,
            "episode_limit": self.episode_limit,
            "spawn_points": [list(p) for p in self.spawn_points],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported maze schema {d.get('schema')!r}; expected {SCHEMA!r}")
        return cls(
            name=d["name"],
            walls=tuple(tuple(float(v) for v in w) for w in d["walls"]),
            obstacles=tuple(
                Obstacle(tuple(float(v) for v in o["center"]), float(o["radius"]), float(o["mass"]))
                for o in d.get("obstacles", [])
            ),
            start=tuple(float(v) for v in d["start"]),
            goal=tuple(float(v) for v in d["goal"]),
            goal_radius=float(d.get("goal_radius", 0.02)),
            episode_limit=int(d.get("episode_limit", 300)),
            spawn_points=tuple(tuple(float(v) for v in p) for p in d.get("spawn_points", [])),
        )


def load_maze(name_or_path):
    """Load a built-in maze by name or a maze JSON file by path."""
    if isinstance(name_or_path, MazeSpec):
        return name_or_path
    s = str(name_or_path)
    if s in BUILTIN:
        text = resources.files("tankguard.maze").joinpath("data", f"{s}.json").read_text()
    else:
        text = Path(s).read_text()
    return MazeSpec.from_dict(json.loads(text))


def save_maze(spec: MazeSpec, path):
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
