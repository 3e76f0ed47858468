"""Occupancy-grid navigation: shortest paths, path geometry and detection sweeps.

Moves are 8-connected with diagonal cost sqrt(2); a diagonal step is allowed
only when both orthogonally adjacent cells are free (no corner cutting).
Paths are returned as polylines through cell centers.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gridmodel import DetectionDisc, GridSpec, Place, RateGrid, rate_in_disc

DEFAULT_SPEED = 0.5  # m/s
SQRT2 = math.sqrt(2.0)

_MOVES = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]


class NoPathError(RuntimeError):
    """The goal cannot be reached from the start on this map."""


@dataclass
class OccupancyMap:
    blocked: np.ndarray  # bool, shape (height, width), indexed [cy, cx]
    cell_size: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        self.blocked = np.asarray(self.blocked, dtype=bool)
        if self.blocked.ndim != 2 or self.blocked.size == 0:
            raise ValueError("blocked must be a non-empty 2D array")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if self.blocked.all():
            raise ValueError("map has no free cell")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @classmethod
    def empty(cls, width: int, height: int, cell_size: float = 1.0, origin=(0.0, 0.0)):
        return cls(np.zeros((height, width), dtype=bool), cell_size, origin)

    @property
    def width(self) -> int:
        return self.blocked.shape[1]

    @property
    def height(self) -> int:
        return self.blocked.shape[0]

    @property
    def free(self) -> np.ndarray:
        return ~self.blocked

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.width, self.height, self.cell_size, self.origin)

    def is_free(self, cell) -> bool:
        cx, cy = cell
        return 0 <= cx < self.width and 0 <= cy < self.height and not self.blocked[cy, cx]

    def neighbors(self, cell):
        """Reachable neighbor cells with step costs (in cells)."""
        cx, cy = cell
        for dx, dy in _MOVES:
            nx, ny = cx + dx, cy + dy
            if not self.is_free((nx, ny)):
                continue
            if dx and dy:
                if not (self.is_free((cx + dx, cy)) and self.is_free((cx, cy + dy))):
                    continue
                yield (nx, ny), SQRT2
            else:
                yield (nx, ny), 1.0

    def place_at(self, point, pid: int = 0, rate_mean: float = 0.0) -> Place:
        """Place for the cell containing ``point``, snapped to the cell center."""
        cell = self.spec.world_to_cell(point)
        if not self.is_free(cell):
            raise ValueError(f"point {tuple(point)} is not on a free cell")
        c = self.spec.cell_center(*cell)
        return Place(pid, (float(c[0]), float(c[1])), cell, rate_mean)

    # file formats -----------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({"cell_size": self.cell_size, "origin": list(self.origin),
                           "blocked": self.blocked.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "OccupancyMap":
        d = json.loads(text)
        return cls(np.array(d["blocked"], dtype=bool), float(d.get("cell_size", 1.0)),
                   tuple(d.get("origin", (0.0, 0.0))))

    def to_pgm(self) -> bytes:
        """Binary PGM (P5); free cells 254, blocked 0. Image row i is grid row cy=i."""
        img = np.where(self.blocked, 0, 254).astype(np.uint8)
        header = f"P5\n{self.width} {self.height}\n255\n".encode()
        return header + img.tobytes()

    @classmethod
    def from_pgm(cls, data: bytes, threshold: int = 128, cell_size: float = 1.0,
                 origin=(0.0, 0.0)) -> "OccupancyMap":
        """Parse a binary PGM; pixels darker than ``threshold`` are blocked."""
        tokens = []
        pos = 0
        while len(tokens) < 4:
            while data[pos:pos + 1].isspace():
                pos += 1
            if data[pos:pos + 1] == b"#":
                pos = data.index(b"\n", pos) + 1
                continue
            start = pos
            while not data[pos:pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
        if tokens[0] != b"P5":
            raise ValueError("only binary PGM (P5) is supported")
        width, height, maxval = (int(t) for t in tokens[1:])
        if maxval > 255:
            raise ValueError("16-bit PGM not supported")
        pos += 1  # single whitespace after maxval
        pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
        return cls(pixels.reshape(height, width) < threshold, cell_size, origin)

    def save(self, path) -> None:
        path = Path(path)
        if path.suffix.lower() == ".pgm":
            path.write_bytes(self.to_pgm())
        else:
            path.write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path, threshold: int = 128, cell_size: float = 1.0, origin=(0.0, 0.0)):
        path = Path(path)
        if path.suffix.lower() == ".pgm":
            return cls.from_pgm(path.read_bytes(), threshold, cell_size, origin)
        return cls.from_json(path.read_text())


@dataclass
class PathGeometry:
    waypoints: np.ndarray  # (N, 2) world points
    length: float
    avg_speed: float = DEFAULT_SPEED

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)
        if not self.avg_speed > 0:
            raise ValueError("avg_speed must be positive")

    @classmethod
    def from_points(cls, points, avg_speed: float = DEFAULT_SPEED) -> "PathGeometry":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls(pts, arc_length(pts), avg_speed)

    @classmethod
    def stationary(cls, point, avg_speed: float = DEFAULT_SPEED) -> "PathGeometry":
        return cls(np.asarray(point, dtype=float).reshape(1, 2), 0.0, avg_speed)

    @property
    def duration(self) -> float:
        return self.length / self.avg_speed

    def reversed(self) -> "PathGeometry":
        return PathGeometry(self.waypoints[::-1].copy(), self.length, self.avg_speed)

    def point_at(self, s) -> np.ndarray:
        """World point(s) at arc distance ``s`` from the start, clipped to the path."""
        s = np.asarray(s, dtype=float)
        if len(self.waypoints) == 1:
            return np.broadcast_to(self.waypoints[0], s.shape + (2,)).copy()
        cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(self.waypoints, axis=0).T))])
        s = np.clip(s, 0.0, cum[-1])
        return np.stack([np.interp(s, cum, self.waypoints[:, 0]),
                         np.interp(s, cum, self.waypoints[:, 1])], axis=-1)

    def to_dict(self) -> dict:
        return {"waypoints": self.waypoints.tolist(), "length": self.length,
                "avg_speed": self.avg_speed}


def arc_length(points) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return 0.0
    return float(np.hypot(*np.diff(pts, axis=0).T).sum())


def _octile(a, b) -> float:
    dx = abs(a[0] - b[0])
    dy = abs(a[1] - b[1])
    return (SQRT2 - 1.0) * min(dx, dy) + max(dx, dy)


def shortest_cells(grid_map: OccupancyMap, start, goal) -> list[tuple[int, int]]:
    """A* over free cells; returns the cell sequence from ``start`` to ``goal``."""
    start, goal = tuple(start), tuple(goal)
    for c in (start, goal):
        if not grid_map.is_free(c):
            raise ValueError(f"cell {c} is blocked or out of bounds")
    tie = itertools.count()
    frontier = [(_octile(start, goal), next(tie), start)]
    came_from = {start: None}
    cost = {start: 0.0}
    closed = set()
    while frontier:
        _, _, cur = heapq.heappop(frontier)
        if cur == goal:
            out = [cur]
            while came_from[out[-1]] is not None:
                out.append(came_from[out[-1]])
            return out[::-1]
        if cur in closed:
            continue
        closed.add(cur)
        for nxt, step in grid_map.neighbors(cur):
            g = cost[cur] + step
            if g < cost.get(nxt, math.inf) - 1e-12:
                cost[nxt] = g
                came_from[nxt] = cur
                heapq.heappush(frontier, (g + _octile(nxt, goal), next(tie), nxt))
    raise NoPathError(f"no path from {start} to {goal}")


def plan_path(grid_map: OccupancyMap, start: Place, goal: Place,
              avg_speed: float = DEFAULT_SPEED, approach_radius: float = 0.0) -> PathGeometry:
    """Shortest 8-connected path between two places as a world polyline.

    With ``approach_radius > 0`` the path ends at the first waypoint within that
    distance of the goal instead of at the goal itself.
    """
    cells = shortest_cells(grid_map, start.cell, goal.cell)
    spec = grid_map.spec
    pts = np.array([spec.cell_center(cx, cy) for cx, cy in cells])
    if approach_radius > 0:
        d = np.hypot(pts[:, 0] - pts[-1, 0], pts[:, 1] - pts[-1, 1])
        pts = pts[: int(np.argmax(d <= approach_radius)) + 1]
    return PathGeometry.from_points(pts, avg_speed)


def distance_field(grid_map: OccupancyMap, source) -> np.ndarray:
    """Shortest path length (meters) from ``source`` cell to every cell; inf if unreachable."""
    dist = np.full(grid_map.blocked.shape, np.inf)
    source = tuple(source)
    if not grid_map.is_free(source):
        raise ValueError(f"cell {source} is blocked or out of bounds")
    dist[source[1], source[0]] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, cur = heapq.heappop(heap)
        if d > dist[cur[1], cur[0]]:
            continue
        for nxt, step in grid_map.neighbors(cur):
            nd = d + step
            if nd < dist[nxt[1], nxt[0]] - 1e-12:
                dist[nxt[1], nxt[0]] = nd
                heapq.heappush(heap, (nd, nxt))
    return dist * grid_map.cell_size


@dataclass
class Sweep:
    """Disc rate sampled along a path: ``rates[k]`` holds on ``[times[k], times[k+1])``."""

    times: np.ndarray
    rates: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self):
        return iter(zip(self.times.tolist(), self.rates.tolist()))

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0


def sweep_times(duration: float, dt: float) -> np.ndarray:
    """Sample times ``0, dt, 2dt, ...`` covering ``[0, duration]`` including the endpoint."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    k = int(math.floor(duration / dt + 1e-9))
    t = np.arange(k + 1) * dt
    if duration - t[-1] > 1e-9 * max(1.0, duration):
        t = np.append(t, duration)
    return t


def sweep_rates(path: PathGeometry, grid: RateGrid, disc_radius: float = 2.0,
                dt: float = 1.0, max_variance: float | None = None) -> Sweep:
    """Slide the detection disc along ``path`` at its average speed.

    Returns the summed disc rate at every sample time ``t_k = k * dt`` of the
    traversal, plus the endpoint time ``length / avg_speed``.
    """
    times = sweep_times(path.duration, dt)
    pts = path.point_at(times * path.avg_speed)
    rates = np.array([rate_in_disc(grid, DetectionDisc((p[0], p[1]), disc_radius), max_variance)
                      for p in pts])
    return Sweep(times, rates)
