"""Grid approximation of an inhomogeneous spatial Poisson process of people occurrence.

Each cell carries a Gamma(alpha, beta) posterior over its constant arrival rate
(events per second). The posterior is learned from counts observed inside the
robot's circular detection disc and queried by the planner as summed disc rates.

Cells are indexed ``(cx, cy)`` with ``0 <= cx < width_cells`` along world x and
``0 <= cy < height_cells`` along world y. Arrays are stored ``[cy, cx]``.

Thread safety: queries only read the arrays and may run concurrently; ``update``
mutates in place and needs a single writer.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

# Defaults used in the building experiments: 50 x 25 cells of 1 m, 2 m disc.
DEFAULT_WIDTH = 50
DEFAULT_HEIGHT = 25
DEFAULT_CELL_SIZE = 1.0
DEFAULT_DISC_RADIUS = 2.0

_EPS = 1e-9


@dataclass(frozen=True)
class GridSpec:
    width_cells: int = DEFAULT_WIDTH
    height_cells: int = DEFAULT_HEIGHT
    cell_size: float = DEFAULT_CELL_SIZE
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.width_cells < 1 or self.height_cells < 1:
            raise ValueError("grid needs at least one cell")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape ``(height, width)``."""
        return (self.height_cells, self.width_cells)

    def in_bounds(self, cx: int, cy: int) -> bool:
        return 0 <= cx < self.width_cells and 0 <= cy < self.height_cells

    def cell_center(self, cx, cy) -> np.ndarray:
        ox, oy = self.origin
        return np.array([ox + (cx + 0.5) * self.cell_size, oy + (cy + 0.5) * self.cell_size])

    def world_to_cell(self, point) -> tuple[int, int]:
        ox, oy = self.origin
        cx = math.floor((point[0] - ox) / self.cell_size)
        cy = math.floor((point[1] - oy) / self.cell_size)
        return cx, cy

    def contains_point(self, point) -> bool:
        return self.in_bounds(*self.world_to_cell(point))

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """World x and y of every cell center, each shaped ``(height, width)``."""
        ox, oy = self.origin
        xs = ox + (np.arange(self.width_cells) + 0.5) * self.cell_size
        ys = oy + (np.arange(self.height_cells) + 0.5) * self.cell_size
        return np.meshgrid(xs, ys)

    def to_dict(self) -> dict:
        return {
            "width_cells": self.width_cells,
            "height_cells": self.height_cells,
            "cell_size": self.cell_size,
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GridSpec":
        return cls(int(d["width_cells"]), int(d["height_cells"]), float(d["cell_size"]),
                   tuple(d.get("origin", (0.0, 0.0))))


@dataclass(frozen=True)
class DetectionDisc:
    center: tuple[float, float]
    radius: float = DEFAULT_DISC_RADIUS

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disc radius must be positive")


@dataclass(frozen=True)
class Place:
    """A grid cell the robot may drive to or wait at. Id 0 is the help location."""

    id: int
    position: tuple[float, float]
    cell: tuple[int, int]
    rate_mean: float = 0.0

    def to_dict(self) -> dict:
        return {"id": self.id, "position": list(self.position), "cell": list(self.cell),
                "rate_mean": self.rate_mean}


def disc_cells(spec: GridSpec, center, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Cells whose center lies within ``radius`` of ``center`` (boundary inclusive)."""
    ox, oy = spec.origin
    cs = spec.cell_size
    x, y = float(center[0]), float(center[1])
    x0 = max(0, math.floor((x - radius - ox) / cs - 0.5))
    x1 = min(spec.width_cells - 1, math.ceil((x + radius - ox) / cs - 0.5))
    y0 = max(0, math.floor((y - radius - oy) / cs - 0.5))
    y1 = min(spec.height_cells - 1, math.ceil((y + radius - oy) / cs - 0.5))
    if x0 > x1 or y0 > y1:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    cxs = np.arange(x0, x1 + 1)
    cys = np.arange(y0, y1 + 1)
    gx, gy = np.meshgrid(cxs, cys)
    dx = ox + (gx + 0.5) * cs - x
    dy = oy + (gy + 0.5) * cs - y
    inside = dx * dx + dy * dy <= radius * radius * (1 + _EPS) + _EPS
    return gx[inside], gy[inside]


@dataclass
class RateGrid:
    """Gamma posteriors of per-cell people arrival rates for one time slice."""

    spec: GridSpec
    alpha: np.ndarray = None
    beta: np.ndarray = None
    slice_id: int = 0

    def __post_init__(self):
        if self.alpha is None:
            self.alpha = np.ones(self.spec.shape)
        if self.beta is None:
            self.beta = np.ones(self.spec.shape)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        if self.alpha.shape != self.spec.shape or self.beta.shape != self.spec.shape:
            raise ValueError(f"cell arrays must have shape {self.spec.shape}")

    @classmethod
    def from_rates(cls, rates, spec: GridSpec | None = None, exposure: float = 1e4,
                   slice_id: int = 0) -> "RateGrid":
        """Grid whose posterior means equal ``rates`` after ``exposure`` seconds of observation.

        Meant for synthetic environments: ``beta = 1 + exposure`` and
        ``alpha = rates * beta``. Zero rates stay exactly zero, so alpha may sit
        below the learning prior of 1.
        """
        rates = np.asarray(rates, dtype=float)
        if spec is None:
            spec = GridSpec(rates.shape[1], rates.shape[0])
        if np.any(rates < 0):
            raise ValueError("rates must be non-negative")
        beta = np.full(spec.shape, 1.0 + exposure)
        return cls(spec, rates * beta, beta, slice_id)

    @property
    def rates(self) -> np.ndarray:
        """Posterior mean rate per cell, 1/s."""
        return self.alpha / self.beta

    @property
    def variance(self) -> np.ndarray:
        return self.alpha / self.beta**2

    def copy(self) -> "RateGrid":
        return RateGrid(self.spec, self.alpha.copy(), self.beta.copy(), self.slice_id)

    def update(self, robot_pose, counts: Mapping[tuple[int, int], int],
               disc_radius: float = DEFAULT_DISC_RADIUS, duration: float = 1.0) -> "RateGrid":
        """Conjugate update for one observation step; see :func:`update`."""
        return update(self, robot_pose, counts, disc_radius, duration)

    def rate_in_disc(self, disc: DetectionDisc, max_variance: float | None = None) -> float:
        return rate_in_disc(self, disc, max_variance)

    def to_dict(self) -> dict:
        cells = np.stack([self.alpha, self.beta], axis=-1).reshape(-1, 2)
        return {"spec": self.spec.to_dict(), "slice_id": self.slice_id,
                "cells": cells.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "RateGrid":
        spec = GridSpec.from_dict(d["spec"])
        cells = np.asarray(d["cells"], dtype=float)
        if cells.shape != (spec.width_cells * spec.height_cells, 2):
            raise ValueError("cells must hold one [alpha, beta] pair per grid cell")
        cells = cells.reshape(spec.height_cells, spec.width_cells, 2)
        return cls(spec, cells[..., 0].copy(), cells[..., 1].copy(), int(d.get("slice_id", 0)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "RateGrid":
        return cls.from_dict(json.loads(Path(path).read_text()))


def update(grid: RateGrid, robot_pose, counts: Mapping[tuple[int, int], int],
           disc_radius: float = DEFAULT_DISC_RADIUS, duration: float = 1.0) -> RateGrid:
    """Add observed counts to every cell inside the detection disc around ``robot_pose``.

    For covered cells ``alpha += count`` and ``beta += duration``; counts for cells
    outside the disc are ignored. ``duration`` is the step's exposure in seconds,
    so that ``alpha / beta`` stays a per-second rate for any step length; the
    default of one second gives the plain ``beta += 1`` rule.

    Raises ValueError (leaving the grid untouched) for out-of-bounds keys or
    negative counts.
    """
    spec = grid.spec
    for (cx, cy), c in counts.items():
        if not spec.in_bounds(cx, cy):
            raise ValueError(f"count for cell {(cx, cy)} outside {spec.width_cells}x{spec.height_cells} grid")
        if c < 0:
            raise ValueError(f"negative count {c} for cell {(cx, cy)}")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    gx, gy = disc_cells(spec, robot_pose, disc_radius)
    if len(gx) == 0:
        return grid
    covered = np.zeros(spec.shape, dtype=bool)
    covered[gy, gx] = True
    for (cx, cy), c in counts.items():
        if covered[cy, cx]:
            grid.alpha[cy, cx] += c
    grid.beta[gy, gx] += duration
    return grid


def rate_in_disc(grid: RateGrid, disc: DetectionDisc, max_variance: float | None = None) -> float:
    """Summed mean rate of all cells whose center lies within the disc.

    With ``max_variance`` set, cells whose posterior variance exceeds it are
    left out (confident-only mode). A disc covering no cell yields 0.0 and a
    debug log record.
    """
    gx, gy = disc_cells(grid.spec, disc.center, disc.radius)
    if len(gx) == 0:
        log.debug("disc at %s covers no grid cell", disc.center)
        return 0.0
    a = grid.alpha[gy, gx]
    b = grid.beta[gy, gx]
    lam = a / b
    if max_variance is not None:
        lam = lam[a / (b * b) <= max_variance]
    return float(lam.sum())


def sample_places(grid: RateGrid, n: int, min_separation: float = DEFAULT_DISC_RADIUS,
                  max_variance: float = 1e-3, max_distance: float = 50.0,
                  start=(0.0, 0.0), seed=None, *, mask: np.ndarray | None = None,
                  min_distance: float = 0.0, max_draws: int | None = None) -> list[Place]:
    """Draw up to ``n`` well-separated candidate places by roulette-wheel selection.

    A cell is drawn with probability proportional to its mean rate among the
    eligible cells: variance ``<= max_variance``, distance to ``start`` within
    ``[min_distance, max_distance]`` and, if given, ``mask`` true. Each drawn cell
    leaves the wheel. A draw closer than ``min_separation`` to kept places
    replaces them only if its rate is strictly larger than all of theirs,
    otherwise it is discarded.

    Returns places with ids ``1..k`` (k <= n), in selection order. An empty list
    means no eligible rate mass.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    spec = grid.spec
    lam = grid.rates
    xs, ys = spec.centers()
    dist = np.hypot(xs - start[0], ys - start[1])
    eligible = (grid.variance <= max_variance) & (dist <= max_distance) & (dist >= min_distance)
    if mask is not None:
        eligible &= np.asarray(mask, dtype=bool)
    weights = np.where(eligible, lam, 0.0).ravel().copy()
    if max_draws is None:
        max_draws = 100 * n

    kept: list[int] = []
    for _ in range(max_draws):
        total = weights.sum()
        if len(kept) >= n or not total > 0:
            break
        flat = int(np.searchsorted(np.cumsum(weights), rng.random() * total, side="right"))
        flat = min(flat, weights.size - 1)
        weights[flat] = 0.0
        here = (xs.flat[flat], ys.flat[flat])
        close = [k for k in kept
                 if math.hypot(xs.flat[k] - here[0], ys.flat[k] - here[1]) < min_separation]
        if all(lam.flat[flat] > lam.flat[k] for k in close):
            kept = [k for k in kept if k not in close]
            kept.append(flat)

    places = []
    for i, flat in enumerate(kept, start=1):
        cy, cx = divmod(flat, spec.width_cells)
        places.append(Place(i, (float(xs.flat[flat]), float(ys.flat[flat])), (cx, cy),
                            float(lam.flat[flat])))
    return places


@dataclass
class ArrivalStream:
    """Individual simulated arrivals, sorted by time."""

    times: np.ndarray
    cx: np.ndarray
    cy: np.ndarray
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.ones(len(self.times), dtype=int)

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self):
        for t, x, y in zip(self.times, self.cx, self.cy):
            yield float(t), (int(x), int(y))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "cell_x", "cell_y", "count"])
            for t, x, y, c in zip(self.times, self.cx, self.cy, self.counts):
                w.writerow([repr(float(t)), int(x), int(y), int(c)])

    @classmethod
    def from_csv(cls, path) -> "ArrivalStream":
        rows = list(csv.DictReader(open(path, newline="")))
        return cls(np.array([float(r["time_s"]) for r in rows]),
                   np.array([int(r["cell_x"]) for r in rows], dtype=int),
                   np.array([int(r["cell_y"]) for r in rows], dtype=int),
                   np.array([int(r["count"]) for r in rows], dtype=int))


def simulate_arrivals(grid: RateGrid, horizon: float, dt: float = 1.0, seed=None,
                      cells: Iterable[tuple[int, int]] | None = None,
                      chunk_steps: int = 65536) -> ArrivalStream:
    """Sample arrivals of the grid's Poisson process over ``[0, horizon)``.

    Per cell and step the count is Poisson(rate * dt); each arrival then gets a
    uniform time inside its step, which makes the stream an exact Poisson
    process regardless of ``dt``. ``cells`` restricts sampling to a subset.
    """
    if not dt > 0 or horizon < dt:
        raise ValueError("need dt > 0 and horizon >= dt")
    rng = np.random.default_rng(seed)
    if cells is None:
        cys, cxs = np.nonzero(grid.rates > 0)
    else:
        pairs = np.array(list(cells), dtype=int).reshape(-1, 2)
        cxs, cys = pairs[:, 0], pairs[:, 1]
    lam = grid.rates[cys, cxs] if len(cxs) else np.empty(0)
    n_steps = int(math.floor(horizon / dt + _EPS))
    times, ex, ey = [], [], []
    for s0 in range(0, n_steps, chunk_steps):
        s1 = min(n_steps, s0 + chunk_steps)
        if len(lam) == 0:
            break
        counts = rng.poisson(lam * dt, size=(s1 - s0, len(lam)))
        step_idx, cell_idx = np.nonzero(counts)
        reps = counts[step_idx, cell_idx]
        step_idx = np.repeat(step_idx, reps)
        cell_idx = np.repeat(cell_idx, reps)
        times.append((s0 + step_idx + rng.random(len(step_idx))) * dt)
        ex.append(cxs[cell_idx])
        ey.append(cys[cell_idx])
    if not times:
        return ArrivalStream(np.empty(0), np.empty(0, dtype=int), np.empty(0, dtype=int))
    t = np.concatenate(times)
    x = np.concatenate(ex)
    y = np.concatenate(ey)
    order = np.lexsort((x, y, t))
    return ArrivalStream(t[order], x[order], y[order])


def counts_by_cell(cells: Sequence[tuple[int, int]]) -> dict[tuple[int, int], int]:
    out: dict[tuple[int, int], int] = {}
    for c in cells:
        key = (int(c[0]), int(c[1]))
        out[key] = out.get(key, 0) + 1
    return out
