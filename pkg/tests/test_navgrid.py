import heapq
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psbt.gridmodel import RateGrid
from psbt.navgrid import (NoPathError, OccupancyMap, PathGeometry, arc_length, distance_field,
                          plan_path, shortest_cells, sweep_rates, sweep_times)


def oracle_distance(blocked, start, goal):
    """Plain Dijkstra over the 8-neighbourhood, written independently of the module."""
    h, w = blocked.shape
    free = lambda x, y: 0 <= x < w and 0 <= y < h and not blocked[y, x]
    best = {start: 0.0}
    heap = [(0.0, start)]
    while heap:
        d, (x, y) = heapq.heappop(heap)
        if (x, y) == goal:
            return d
        if d > best[(x, y)]:
            continue
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if (dx, dy) == (0, 0) or not free(x + dx, y + dy):
                    continue
                if dx and dy and not (free(x + dx, y) and free(x, y + dy)):
                    continue
                nd = d + math.hypot(dx, dy)
                if nd < best.get((x + dx, y + dy), math.inf):
                    best[(x + dx, y + dy)] = nd
                    heapq.heappush(heap, (nd, (x + dx, y + dy)))
    return math.inf


@st.composite
def maps(draw):
    w = draw(st.integers(2, 20))
    h = draw(st.integers(2, 20))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    blocked = rng.random((h, w)) < draw(st.floats(0, 0.4))
    free = np.argwhere(~blocked)
    if len(free) == 0:
        blocked[0, 0] = False
        free = np.argwhere(~blocked)
    a = tuple(free[rng.integers(len(free))][::-1])
    b = tuple(free[rng.integers(len(free))][::-1])
    return blocked, a, b


@settings(max_examples=150, deadline=None)
@given(maps())
def test_astar_matches_dijkstra_oracle(case):
    blocked, a, b = case
    m = OccupancyMap(blocked)
    expected = oracle_distance(blocked, a, b)
    field = distance_field(m, a)
    assert field[b[1], b[0]] == pytest.approx(expected) if math.isfinite(expected) \
        else math.isinf(field[b[1], b[0]])
    if math.isinf(expected):
        with pytest.raises(NoPathError):
            shortest_cells(m, a, b)
        return
    cells = shortest_cells(m, a, b)
    assert cells[0] == a and cells[-1] == b
    length = sum(math.dist(p, q) for p, q in zip(cells, cells[1:]))
    assert length == pytest.approx(expected)
    for (x0, y0), (x1, y1) in zip(cells, cells[1:]):
        assert max(abs(x1 - x0), abs(y1 - y0)) == 1
        assert not blocked[y1, x1]
        if x1 != x0 and y1 != y0:  # no corner cutting
            assert not blocked[y0, x1] and not blocked[y1, x0]


def test_plan_path_examples():
    m = OccupancyMap.empty(10, 10)
    p = plan_path(m, m.place_at((0.5, 0.5), 0), m.place_at((9.5, 9.5), 1))
    assert p.length == pytest.approx(9 * math.sqrt(2))
    q = plan_path(m, m.place_at((0.5, 0.5), 0), m.place_at((1.5, 0.5), 1))
    assert q.length == pytest.approx(1.0)
    assert p.length == pytest.approx(arc_length(p.waypoints), rel=1e-6)


def test_plan_path_cell_size_scales():
    m = OccupancyMap.empty(10, 10, cell_size=0.5)
    p = plan_path(m, m.place_at((0.25, 0.25)), m.place_at((4.75, 4.75), 1))
    assert p.length == pytest.approx(9 * math.sqrt(2) * 0.5)


def test_wall_detour():
    blocked = np.zeros((10, 10), dtype=bool)
    blocked[:9, 5] = True
    m = OccupancyMap(blocked)
    p = plan_path(m, m.place_at((0.5, 0.5)), m.place_at((9.5, 0.5), 1))
    assert p.length == pytest.approx(oracle_distance(blocked, (0, 0), (9, 0)))
    assert p.length > 9


def test_unreachable_raises():
    blocked = np.zeros((5, 5), dtype=bool)
    blocked[:, 2] = True
    m = OccupancyMap(blocked)
    with pytest.raises(NoPathError):
        plan_path(m, m.place_at((0.5, 0.5)), m.place_at((4.5, 4.5), 1))


def test_approach_radius_stops_short():
    m = OccupancyMap.empty(20, 3)
    p = plan_path(m, m.place_at((0.5, 1.5)), m.place_at((15.5, 1.5), 1), approach_radius=2.0)
    assert p.length == pytest.approx(13.0)


def test_map_validation():
    with pytest.raises(ValueError):
        OccupancyMap(np.ones((3, 3), dtype=bool))
    with pytest.raises(ValueError):
        OccupancyMap.empty(3, 3).place_at((10, 10))


@pytest.mark.parametrize("suffix", [".json", ".pgm"])
def test_map_round_trip(tmp_path, suffix):
    rng = np.random.default_rng(2)
    blocked = rng.random((7, 11)) < 0.3
    blocked[0, 0] = False
    m = OccupancyMap(blocked)
    m.save(tmp_path / f"m{suffix}")
    assert np.array_equal(OccupancyMap.load(tmp_path / f"m{suffix}").blocked, blocked)


def test_pgm_with_comment():
    data = b"P5\n# made by hand\n3 2\n255\n" + bytes([254, 0, 254, 254, 254, 10])
    m = OccupancyMap.from_pgm(data)
    assert m.blocked.tolist() == [[False, True, False], [False, False, True]]


def test_sweep_times_include_endpoint():
    assert sweep_times(3.0, 1.0).tolist() == [0, 1, 2, 3]
    assert sweep_times(2.5, 1.0).tolist() == [0, 1, 2, 2.5]


def test_sweep_rates_on_uniform_grid():
    g = RateGrid.from_rates(np.full((5, 30), 0.01))
    path = PathGeometry.from_points([(2.5, 2.5), (27.5, 2.5)])
    sw = sweep_rates(path, g, 2.0, 1.0)
    assert sw.times[-1] == pytest.approx(50.0)
    assert len(sw) == 51
    pts = path.point_at(sw.times * path.avg_speed)
    covered = [sum((cx + 0.5 - x) ** 2 + (cy + 0.5 - y) ** 2 <= 4.0
                   for cx in range(30) for cy in range(5)) for x, y in pts]
    assert np.allclose(sw.rates, np.array(covered) * 0.01)
    assert sw.rates[0] == pytest.approx(0.13) and sw.rates[1] == pytest.approx(0.12)


def test_point_at_clips():
    path = PathGeometry.from_points([(0, 0), (3, 0), (3, 4)])
    assert path.length == 7
    assert path.point_at(5.0).tolist() == [3.0, 2.0]
    assert path.point_at(100.0).tolist() == [3.0, 4.0]
    assert path.reversed().point_at(0.0).tolist() == [3.0, 4.0]
