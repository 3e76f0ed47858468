"""Synthesis and selection of person-search trees, plus the baseline strategies.

Planning samples candidate places from the rate grid, orders them by an open
TSP (genetic algorithm, edge cost = inverse failure rate of the search path),
enumerates every skip / visit / visit-and-wait combination along that order
plus waiting at the help location, scores each tree and keeps the one with the
highest success probability at the look-ahead time.
"""

from __future__ import annotations

import itertools
import json
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from . import sbt
from .actions import (DEFAULT_CONFIDENCE, DEFAULT_L_FAIL, DEFAULT_MAX_WAIT, StochasticAction,
                      make_return_home, make_search, make_wait)
from .gridmodel import DEFAULT_DISC_RADIUS, Place, RateGrid, sample_places
from .navgrid import (DEFAULT_SPEED, NoPathError, OccupancyMap, PathGeometry, distance_field,
                      plan_path, sweep_rates)
from .sbt import SearchTree, TreeScore

SKIP, VISIT, WAIT = "-", "v", "w"


class StrategyKind(str, Enum):
    PSBT = "PSBT"
    W = "W"
    NW = "NW"
    GC = "GC"
    GM = "GM"
    RND = "RND"


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind
    n_lambda: int = 50

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if self.n_lambda < 1:
            raise ValueError("n_lambda must be >= 1")

    @property
    def name(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class GAParams:
    population: int = 100
    generations: int = 200
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    elitism: int = 2
    tournament: int = 3
    seed: int | None = None


@dataclass(frozen=True)
class PlannerConfig:
    n_places: int = 6
    disc_radius: float = DEFAULT_DISC_RADIUS
    p_s_prime: float = DEFAULT_CONFIDENCE
    dt: float = sbt.DEFAULT_DT
    l_fail: float = DEFAULT_L_FAIL
    avg_speed: float = DEFAULT_SPEED
    t_max: float = sbt.DEFAULT_T_MAX
    # sampling thresholds; no published values, these defaults are arbitrary
    max_variance: float = 1e-3
    max_distance: float = 40.0
    min_separation: float | None = None  # None: the disc radius
    confident_only: bool = True
    max_wait: float = DEFAULT_MAX_WAIT
    n_lambda: int = 50
    home_success: bool = True
    nav_failure_aborts: bool = False
    seed: int = 0
    ga: GAParams = GAParams()

    def __post_init__(self):
        for name in ("disc_radius", "dt", "l_fail", "avg_speed", "t_max", "max_variance",
                     "max_distance", "max_wait"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_places < 1:
            raise ValueError("n_places must be >= 1")
        if not 0 < self.p_s_prime < 1:
            raise ValueError("p_s_prime must lie in (0, 1)")
        if self.t_max < self.dt:
            raise ValueError("t_max must be >= dt")

    @property
    def separation(self) -> float:
        return self.disc_radius if self.min_separation is None else self.min_separation

    @property
    def variance_cap(self) -> float | None:
        return self.max_variance if self.confident_only else None

    def score_kwargs(self) -> dict:
        return {"dt": self.dt, "t_max": self.t_max, "home_success": self.home_success,
                "nav_failure_aborts": self.nav_failure_aborts}


@dataclass
class PlanningProblem:
    map: OccupancyMap
    grid: RateGrid
    help_location: Place
    config: PlannerConfig = field(default_factory=PlannerConfig)

    def __post_init__(self):
        if self.map.blocked.shape != self.grid.spec.shape:
            raise ValueError("occupancy map and rate grid must have the same shape")
        if not self.map.is_free(self.help_location.cell):
            raise ValueError("help location must be on a free cell")
        if self.help_location.id != 0:
            self.help_location = replace(self.help_location, id=0)

    @classmethod
    def at(cls, grid_map: OccupancyMap, grid: RateGrid, point, config: PlannerConfig | None = None):
        cell = grid_map.spec.world_to_cell(point)
        p0 = grid_map.place_at(point, 0, float(grid.rates[cell[1], cell[0]]))
        return cls(grid_map, grid, p0, config or PlannerConfig())

    def reachable(self) -> np.ndarray:
        return np.isfinite(distance_field(self.map, self.help_location.cell))

    def eligible(self) -> np.ndarray:
        """Cells a baseline may target: reachable and, in confident-only mode, low variance."""
        ok = self.reachable()
        if self.config.confident_only:
            ok &= self.grid.variance <= self.config.max_variance
        return ok


@dataclass
class TourGraph:
    places: list[Place]  # index 0 is the help location
    cost: np.ndarray  # seconds, inf where no edge
    paths: dict[tuple[int, int], PathGeometry]
    dropped: list[Place] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.places) - 1


@dataclass
class TourResult:
    order: list[int]  # node indices, starting with 0
    cost: float
    history: list[float] = field(default_factory=list)


@dataclass
class CandidatePlan:
    strategy: str
    tree: SearchTree
    places: list[Place]
    tour: list[int]  # place ids in visiting order, starting with 0
    mask: tuple[str, ...] | None = None  # None: wait at the help location only
    score: TreeScore | None = None
    index: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return self.tree.valid

    @property
    def help_location(self) -> Place:
        return self.places[0]

    @property
    def n_actions(self) -> int:
        return len(self.tree.children)

    def to_dict(self, include_timing: bool = False, curve_ref: str | None = None) -> dict:
        s = self.score
        mtts = None if s is None or not math.isfinite(s.expected_time_to_success) \
            else s.expected_time_to_success
        metrics = {"p_success_t_max": None if s is None else s.p_success_final,
                   "t_max": None if s is None else s.t_max,
                   "expected_time_to_success": mtts}
        metrics.update({k: v for k, v in self.meta.items()
                        if k not in ("planning_time_s", "candidates")})
        return {
            "strategy": self.strategy,
            "label": self.tree.label,
            "tour": list(self.tour),
            "mask": None if self.mask is None else list(self.mask),
            "places": [p.to_dict() for p in self.places],
            "actions": self.tree.to_dict()["actions"],
            "p_success_curve_ref": curve_ref,
            "chosen_metrics": metrics,
            "planning_time_s": self.meta.get("planning_time_s") if include_timing else None,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(**kwargs), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# open TSP


def tour_cost(cost: np.ndarray, order: Sequence[int]) -> float:
    return float(sum(cost[a, b] for a, b in zip(order[:-1], order[1:])))


def _order_crossover(p1: np.ndarray, p2: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(p1)
    a, b = sorted(rng.choice(n + 1, size=2, replace=False))
    child = np.empty_like(p1)
    middle = p1[a:b]
    rest = [g for g in p2 if g not in set(middle.tolist())]
    child[a:b] = middle
    child[:a] = rest[:a]
    child[b:] = rest[a:]
    return child


def solve_otsp(graph: TourGraph | np.ndarray, ga: GAParams = GAParams(), seed=None) -> TourResult:
    """Open tour from node 0 through every other node once, minimizing summed edge cost.

    Genetic algorithm: tournament selection, order crossover, swap mutation and
    elitism, all driven by one seeded generator. ``history`` holds the best
    cost after each generation.
    """
    cost = graph.cost if isinstance(graph, TourGraph) else np.asarray(graph, dtype=float)
    n = cost.shape[0] - 1
    if n < 1:
        raise ValueError("need at least one node besides the start")
    edges = ~np.eye(n + 1, dtype=bool)
    edges[:, 0] = False
    if not np.isfinite(cost[edges]).all():
        raise ValueError("tour graph must be complete; drop unreachable nodes first")
    if n == 1:
        return TourResult([0, 1], float(cost[0, 1]), [float(cost[0, 1])])
    rng = np.random.default_rng(ga.seed if seed is None else seed)
    genes = np.arange(1, n + 1)
    pop = np.array([rng.permutation(genes) for _ in range(ga.population)])

    def costs(p):
        return cost[0, p[:, 0]] + cost[p[:, :-1], p[:, 1:]].sum(axis=1)

    fit = costs(pop)
    history = []
    for _ in range(ga.generations):
        order = np.argsort(fit, kind="stable")
        pop, fit = pop[order], fit[order]
        history.append(float(fit[0]))
        nxt = [pop[i].copy() for i in range(min(ga.elitism, len(pop)))]
        while len(nxt) < ga.population:
            cand = rng.integers(0, len(pop), size=(2, ga.tournament))
            p1 = pop[cand[0][np.argmin(fit[cand[0]])]]
            p2 = pop[cand[1][np.argmin(fit[cand[1]])]]
            child = _order_crossover(p1, p2, rng) if rng.random() < ga.crossover_rate else p1.copy()
            if rng.random() < ga.mutation_rate:
                i, j = rng.choice(n, size=2, replace=False)
                child[i], child[j] = child[j], child[i]
            nxt.append(child)
        pop = np.array(nxt)
        fit = costs(pop)
    best = int(np.argmin(fit))
    history.append(float(fit[best]))
    order = [0] + pop[best].tolist()
    return TourResult(order, float(fit[best]), history)


def brute_force_otsp(cost: np.ndarray) -> TourResult:
    """Exhaustive open-tour search; for checking the GA on small instances."""
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0] - 1
    best, best_order = math.inf, None
    for perm in itertools.permutations(range(1, n + 1)):
        order = (0,) + perm
        c = tour_cost(cost, order)
        if c < best:
            best, best_order = c, list(order)
    return TourResult(best_order, best)


# ---------------------------------------------------------------------------
# graph and action library


def _search_cost(path: PathGeometry, l_fail: float) -> float:
    """Inverse failure rate of a search path, in seconds."""
    v = path.avg_speed
    return 1.0 / (v / path.length + v / l_fail)


def build_graph(problem: PlanningProblem, places: Sequence[Place]) -> TourGraph:
    """Plan paths between the help location and ``places`` (all ordered pairs).

    Places that cannot be reached from the help location, or that share its
    cell, are dropped with a warning; the rest are renumbered ``1..n``.
    """
    cfg = problem.config
    p0 = problem.help_location
    kept, dropped, to_home = [], [], []
    for p in places:
        if p.cell == p0.cell:
            dropped.append(p)
            continue
        try:
            path = plan_path(problem.map, p0, p, cfg.avg_speed)
        except (NoPathError, ValueError):
            dropped.append(p)
            continue
        kept.append(replace(p, id=len(kept) + 1))
        to_home.append(path)
    if dropped:
        warnings.warn(f"dropped {len(dropped)} unreachable place(s): "
                      f"{[p.cell for p in dropped]}", stacklevel=2)
    nodes = [p0] + kept
    n = len(nodes)
    paths = {}
    cost = np.full((n, n), np.inf)
    for j in range(1, n):
        paths[(0, j)] = to_home[j - 1]
        paths[(j, 0)] = to_home[j - 1].reversed()
    for i in range(1, n):
        for j in range(i + 1, n):
            path = plan_path(problem.map, nodes[i], nodes[j], cfg.avg_speed)
            paths[(i, j)] = path
            paths[(j, i)] = path.reversed()
    for (i, j), path in paths.items():
        cost[i, j] = _search_cost(path, cfg.l_fail)
    return TourGraph(nodes, cost, paths, dropped)


class ActionLibrary:
    """Builds and caches wait, search and return-home actions over one tour graph."""

    def __init__(self, problem: PlanningProblem, graph: TourGraph):
        self.problem = problem
        self.graph = graph
        self._waits: dict[int, StochasticAction] = {}
        self._moves: dict[tuple[int, int], StochasticAction] = {}

    def _sweep(self, path):
        cfg = self.problem.config
        return sweep_rates(path, self.problem.grid, cfg.disc_radius, cfg.dt, cfg.variance_cap)

    def wait(self, i: int) -> StochasticAction:
        if i not in self._waits:
            cfg = self.problem.config
            self._waits[i] = make_wait(self.graph.places[i], self.problem.grid, cfg.disc_radius,
                                       cfg.p_s_prime, cfg.max_wait, cfg.variance_cap)
        return self._waits[i]

    def move(self, i: int, j: int) -> StochasticAction:
        """Search from node i to node j; a move to node 0 is the return-home action."""
        if (i, j) not in self._moves:
            cfg = self.problem.config
            if i == j == 0:
                self._moves[(i, j)] = make_return_home(
                    PathGeometry.stationary(self.graph.places[0].position, cfg.avg_speed),
                    p_s_prime=cfg.p_s_prime, l_fail=cfg.l_fail, place_refs=(0, 0))
            else:
                path = self.graph.paths[(i, j)]
                ids = (self.graph.places[i].id, self.graph.places[j].id)
                make = make_return_home if j == 0 else make_search
                self._moves[(i, j)] = make(path, self._sweep(path), cfg.p_s_prime, cfg.l_fail,
                                           place_refs=ids)
        return self._moves[(i, j)]

    def tree(self, visits: Sequence[tuple[int, bool]], wait_home: bool = False) -> SearchTree:
        """Tree visiting nodes in order, waiting where flagged, then returning home."""
        children = [self.wait(0)] if wait_home else []
        cur = 0
        for node, wait in visits:
            children.append(self.move(cur, node))
            if wait:
                children.append(self.wait(node))
            cur = node
        children.append(self.move(cur, 0))
        return SearchTree(children)


# ---------------------------------------------------------------------------
# candidate enumeration and selection


def sample_problem_places(problem: PlanningProblem, rng=None) -> list[Place]:
    cfg = problem.config
    if rng is None:
        rng = np.random.default_rng([cfg.seed, 1])
    return sample_places(problem.grid, cfg.n_places, cfg.separation, cfg.max_variance,
                         cfg.max_distance, problem.help_location.position, rng,
                         mask=problem.reachable(), min_distance=0.5 * problem.map.cell_size)


def _plan(strategy: str, lib: ActionLibrary, order: Sequence[int], mask, wait_home=False,
          index=0) -> CandidatePlan:
    if mask is None:
        visits = []
    else:
        visits = [(node, m == WAIT) for node, m in zip(order[1:], mask) if m != SKIP]
    tree = lib.tree(visits, wait_home)
    tour_ids = [lib.graph.places[i].id for i in order]
    return CandidatePlan(strategy, tree, lib.graph.places, tour_ids,
                         None if mask is None else tuple(mask), index=index)


def enumerate_candidates(problem: PlanningProblem, graph: TourGraph, tour: TourResult,
                         strategy: str = "PSBT", lib: ActionLibrary | None = None
                         ) -> list[CandidatePlan]:
    """Every skip / visit / visit-and-wait mask over the tour, plus waiting at home.

    Returns ``3**n + 1`` plans, the wait-at-home plan first. Plans holding an
    action that fails the total-probability guard are kept in the list but are
    not ``valid``; callers must skip them.
    """
    lib = lib or ActionLibrary(problem, graph)
    plans = [_plan(strategy, lib, tour.order, None, wait_home=True, index=0)]
    for k, mask in enumerate(itertools.product((SKIP, VISIT, WAIT), repeat=graph.n), start=1):
        plans.append(_plan(strategy, lib, tour.order, mask, index=k))
    return plans


def _rank_key(plan: CandidatePlan):
    s = plan.score
    return (-s.p_success_final, s.expected_time_to_success, plan.n_actions, plan.index)


def _score(plan: CandidatePlan, cfg: PlannerConfig) -> CandidatePlan:
    plan.score = sbt.score(plan.tree, **cfg.score_kwargs())
    return plan


def plan_psbt(problem: PlanningProblem, keep_candidates: bool = False) -> CandidatePlan:
    """Best person-search tree by success probability at the look-ahead time.

    Ties go to the smaller expected time to success, then to fewer actions.
    Without any eligible place the wait-at-home plan is returned.
    """
    t0 = time.perf_counter()
    cfg = problem.config
    places = sample_problem_places(problem)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        graph = build_graph(problem, places)
    for w in caught:
        warnings.warn(w.message, stacklevel=2)
    lib = ActionLibrary(problem, graph)
    if graph.n == 0:
        tour = TourResult([0], 0.0)
        candidates = [_plan("PSBT", lib, [0], None, wait_home=True)]
    else:
        tour = solve_otsp(graph, cfg.ga, seed=[cfg.seed, 2] if cfg.ga.seed is None else None)
        candidates = enumerate_candidates(problem, graph, tour, "PSBT", lib)
    valid = [c for c in candidates if c.valid]
    for c in valid:
        _score(c, cfg)
    best = min(valid, key=_rank_key)
    best.meta.update({
        "n_places": graph.n,
        "n_candidates": len(candidates),
        "n_excluded": len(candidates) - len(valid),
        "tour_cost_s": tour.cost,
        "dropped_places": len(graph.dropped),
        "planning_time_s": time.perf_counter() - t0,
    })
    if keep_candidates:
        best.meta["candidates"] = valid
    return best


def _single_target_plan(strategy: str, problem: PlanningProblem, cell) -> CandidatePlan:
    p0 = problem.help_location
    if tuple(cell) == tuple(p0.cell):
        graph = TourGraph([p0], np.zeros((1, 1)), {})
        lib = ActionLibrary(problem, graph)
        return _plan(strategy, lib, [0], None, wait_home=True)
    target = problem.map.place_at(problem.grid.spec.cell_center(*cell), 1,
                                  float(problem.grid.rates[cell[1], cell[0]]))
    graph = build_graph(problem, [target])
    lib = ActionLibrary(problem, graph)
    return _plan(strategy, lib, [0, 1], (WAIT,))


def _uniform_places(problem: PlanningProblem, rng: np.random.Generator) -> list[Place]:
    cfg = problem.config
    spec = problem.grid.spec
    xs, ys = spec.centers()
    p0 = problem.help_location.position
    d = np.hypot(xs - p0[0], ys - p0[1])
    ok = problem.reachable() & (d <= cfg.max_distance) & (d >= 0.5 * spec.cell_size)
    cand = np.flatnonzero(ok.ravel())
    chosen: list[int] = []
    for flat in rng.permutation(cand):
        if len(chosen) == cfg.n_places:
            break
        if all(math.hypot(xs.flat[flat] - xs.flat[k], ys.flat[flat] - ys.flat[k]) >= cfg.separation
               for k in chosen):
            chosen.append(int(flat))
    out = []
    for i, flat in enumerate(chosen, start=1):
        cy, cx = divmod(flat, spec.width_cells)
        out.append(Place(i, (float(xs.flat[flat]), float(ys.flat[flat])), (cx, cy),
                         float(problem.grid.rates.flat[flat])))
    return out


def plan_baseline(problem: PlanningProblem, strategy: Strategy | str) -> CandidatePlan:
    """Plan for one of the comparison strategies, scored like the PSBT plans.

    W waits at the help location; GM drives to the highest-rate cell and waits;
    GC drives to the nearest of the ``n_lambda`` highest-rate cells and waits; NW
    uses the PSBT places and tour but never waits; RND draws places uniformly,
    orders them by the same open-TSP solver and waits at each with probability 1/2.
    """
    if not isinstance(strategy, Strategy):
        strategy = Strategy(StrategyKind(strategy), problem.config.n_lambda)
    kind = strategy.kind
    cfg = problem.config
    name = kind.value
    if kind is StrategyKind.PSBT:
        return plan_psbt(problem)
    t0 = time.perf_counter()
    if kind is StrategyKind.W:
        plan = _single_target_plan(name, problem, problem.help_location.cell)
    elif kind in (StrategyKind.GM, StrategyKind.GC):
        ok = problem.eligible()
        lam = np.where(ok, problem.grid.rates, -np.inf).ravel()
        if not np.isfinite(lam).any() or lam.max() <= 0:
            plan = _single_target_plan(name, problem, problem.help_location.cell)
        else:
            top = np.argsort(-lam, kind="stable")
            if kind is StrategyKind.GM:
                flat = int(top[0])
            else:
                top = [int(f) for f in top[: strategy.n_lambda] if lam[f] > 0]
                dist = distance_field(problem.map, problem.help_location.cell).ravel()
                flat = min(top, key=lambda f: (dist[f], -lam[f], f))
            cy, cx = divmod(flat, problem.grid.spec.width_cells)
            plan = _single_target_plan(name, problem, (cx, cy))
    elif kind in (StrategyKind.NW, StrategyKind.RND):
        if kind is StrategyKind.NW:
            places = sample_problem_places(problem)
        else:
            places = _uniform_places(problem, np.random.default_rng([cfg.seed, 3]))
        graph = build_graph(problem, places)
        lib = ActionLibrary(problem, graph)
        if graph.n == 0:
            plan = _plan(name, lib, [0], None, wait_home=True)
        else:
            tour = solve_otsp(graph, cfg.ga, seed=[cfg.seed, 2] if cfg.ga.seed is None else None)
            if kind is StrategyKind.NW:
                mask = (VISIT,) * graph.n
            else:
                coins = np.random.default_rng([cfg.seed, 4]).random(graph.n)
                mask = tuple(WAIT if c < 0.5 else VISIT for c in coins)
            plan = _plan(name, lib, tour.order, mask)
    else:  # pragma: no cover
        raise ValueError(f"unknown strategy {strategy}")
    _score(plan, cfg)
    plan.meta["valid"] = plan.valid
    plan.meta["planning_time_s"] = time.perf_counter() - t0
    return plan

