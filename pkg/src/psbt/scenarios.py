"""Synthetic office-like environments for experiments, tests and demos.

All maps are 50 x 25 cells of 1 m by default. Rates are per cell and second,
built from Gaussian hot spots over a small background rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridmodel import GridSpec, RateGrid
from .navgrid import OccupancyMap, distance_field
from .planner import PlannerConfig, PlanningProblem


@dataclass
class Environment:
    name: str
    map: OccupancyMap
    grid: RateGrid
    help_point: tuple[float, float]

    def problem(self, config: PlannerConfig | None = None) -> PlanningProblem:
        return PlanningProblem.at(self.map, self.grid, self.help_point, config)


def office_map(width: int = 50, height: int = 25) -> OccupancyMap:
    """Two interior walls with doorways split the floor into three halls."""
    blocked = np.zeros((height, width), dtype=bool)
    x1, x2 = width * 2 // 5, width * 7 // 10
    blocked[: height * 2 // 3, x1] = True  # doorway at the top
    blocked[height // 3:, x2] = True  # doorway at the bottom
    blocked[height // 2, 2: width // 5] = True  # short partition in the first hall
    return OccupancyMap(blocked)


def blob_rates(shape, spots, background: float = 1e-4) -> np.ndarray:
    """Background plus Gaussian spots ``(x, y, peak, sigma)`` in world meters (1 m cells)."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w] + 0.5
    lam = np.full(shape, float(background))
    for x, y, peak, sigma in spots:
        lam += peak * np.exp(-((xs - x) ** 2 + (ys - y) ** 2) / (2.0 * sigma ** 2))
    return lam


def _grid(grid_map: OccupancyMap, lam: np.ndarray) -> RateGrid:
    lam = np.where(grid_map.blocked, 0.0, lam)
    return RateGrid.from_rates(lam, GridSpec(grid_map.width, grid_map.height, grid_map.cell_size))


def stor_environment() -> Environment:
    """Quiet help location, a busy zone two halls away and a lone hot cell at the far end.

    The hot cell holds the global rate maximum, so greedy-max heads there; the
    busy zone has more total rate within reach.
    """
    m = office_map()
    lam = blob_rates(m.blocked.shape, [(27.0, 6.0, 0.006, 2.0), (14.0, 20.0, 0.003, 1.5)],
                     background=5e-5)
    lam[21, 46] += 0.02
    return Environment("stor", m, _grid(m, lam), (3.5, 3.5))


def cafe_environment() -> Environment:
    """Help location inside a busy area, with weaker zones elsewhere."""
    m = office_map()
    lam = blob_rates(m.blocked.shape, [(10.0, 17.0, 0.005, 2.0), (28.0, 8.0, 0.004, 2.0),
                                       (44.0, 18.0, 0.004, 2.0)], background=1e-4)
    return Environment("cafe", m, _grid(m, lam), (10.5, 17.5))


def zero_environment(width: int = 50, height: int = 25) -> Environment:
    m = OccupancyMap.empty(width, height)
    return Environment("zero", m, _grid(m, np.zeros((height, width))), (width / 2, height / 2))


def random_environment(seed, width: int = 50, height: int = 25, n_spots: int = 4,
                       n_walls: int = 3, background: float = 1e-4,
                       peak: tuple[float, float] = (0.002, 0.008)) -> Environment:
    """Random wall segments and hot spots; the help location is a random reachable cell."""
    rng = np.random.default_rng(seed)
    blocked = np.zeros((height, width), dtype=bool)
    for _ in range(n_walls):
        if rng.random() < 0.5:
            x = int(rng.integers(2, width - 2))
            y0 = int(rng.integers(0, height // 2))
            blocked[y0: y0 + int(rng.integers(height // 3, height * 2 // 3)), x] = True
        else:
            y = int(rng.integers(2, height - 2))
            x0 = int(rng.integers(0, width // 2))
            blocked[y, x0: x0 + int(rng.integers(width // 4, width // 2))] = True
    m = OccupancyMap(blocked)
    spots = [(rng.uniform(0, width), rng.uniform(0, height), rng.uniform(*peak),
              rng.uniform(1.0, 3.0)) for _ in range(n_spots)]
    lam = blob_rates(blocked.shape, spots, background)
    free = np.flatnonzero(~blocked.ravel())
    flat = int(rng.choice(free))
    cy, cx = divmod(flat, width)
    # keep only the component around the help location reachable in the grid too
    reach = np.isfinite(distance_field(m, (cx, cy)))
    lam = np.where(reach, lam, 0.0)
    return Environment(f"random-{seed}", m, _grid(m, lam), (cx + 0.5, cy + 0.5))
