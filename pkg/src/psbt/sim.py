"""Ground-truth Monte Carlo execution of search plans.

The simulated robot follows a plan's actions in fallback order on the true rate
grid. Every step of ``dt`` seconds it sees a Poisson number of arrivals from
the cells inside its detection disc; the first arrival ends the search, after
which the robot drives back to the help location on a fresh shortest path.
While moving, navigation fails as an exponential event with rate
``avg_speed / l_fail``; a failure ends the current action and the next one
starts from its planned start (or the run aborts, if configured).

Each run draws from its own generator seeded from the run seed, so a batch of
runs gives exactly the outcomes of running each seed alone.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .actions import ActionKind
from .gridmodel import RateGrid, disc_cells
from .navgrid import OccupancyMap, distance_field, plan_path
from .planner import CandidatePlan, PlanningProblem, Strategy, StrategyKind, plan_baseline

EXHAUSTED = "exhausted"
NAVIGATION = "navigation"
_CAUSES = ("", EXHAUSTED, NAVIGATION)

CURVE_TIMES = tuple(range(20, 201, 20))


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0
    runs: int = 1000
    detection_radius: float = 2.0
    seed: int = 0
    person_dwell: float = 0.0
    l_fail: float = 100.0
    home_success: bool = True
    nav_failure_aborts: bool = False
    max_time: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.person_dwell < 0:
            raise ValueError("person_dwell must be non-negative")


@dataclass
class RunOutcome:
    success: bool
    t_r: float  # find + return time on success, termination time otherwise
    t_find: float | None = None
    found_at: tuple[float, float] | None = None
    failure_cause: str | None = None
    seed: int | None = None


@dataclass
class BatchResult:
    seeds: np.ndarray
    success: np.ndarray
    t_find: np.ndarray  # inf for failures
    t_r: np.ndarray
    cause: np.ndarray  # index into _CAUSES
    found_at: np.ndarray  # (runs, 2), nan for failures

    def __len__(self) -> int:
        return len(self.seeds)

    def outcome(self, i: int) -> RunOutcome:
        ok = bool(self.success[i])
        return RunOutcome(ok, float(self.t_r[i]), float(self.t_find[i]) if ok else None,
                          tuple(map(float, self.found_at[i])) if ok else None,
                          None if ok else _CAUSES[self.cause[i]], int(self.seeds[i]))

    def success_by(self, t) -> np.ndarray:
        """Fraction of runs that found someone by each time in ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return (self.t_find[None, :] <= t[:, None] + 1e-9).mean(axis=1)


class _Streams:
    """Per-run uniform streams, refilled in chunks.

    Generators emit doubles sequentially, so the chunk length (kept small for
    big batches to bound memory) never changes the values a run sees.
    """

    def __init__(self, seeds: Sequence[int], width: int, chunk: int | None = None):
        self.gens = [np.random.Generator(np.random.PCG64(int(s))) for s in seeds]
        self.width = width
        if chunk is None:
            chunk = int(np.clip(2**21 // max(1, len(self.gens) * width), 8, 256))
        self.chunk = chunk
        self.buf = np.empty((len(self.gens), chunk, width))

    def draw(self, step: int, idx: np.ndarray) -> np.ndarray:
        j = step % self.chunk
        if j == 0:
            for i in idx:
                self.buf[i] = self.gens[i].random((self.chunk, self.width))
        return self.buf[idx, j]


@dataclass
class _Layout:
    """Flattened (action, age) states of a plan with everything a step needs."""

    rate: np.ndarray
    nav_rate: np.ndarray
    next_age: np.ndarray  # -1: tree ends (exhausted)
    next_nav: np.ndarray  # -1: tree ends (navigation)
    ret_time: np.ndarray
    pos: np.ndarray  # (n, 2)
    entry: int  # -1 if the tree has no states


def _disc_rate(lam: np.ndarray, grid: RateGrid, p, r: float) -> float:
    gx, gy = disc_cells(grid.spec, p, r)
    return float(lam[gy, gx].sum())


def _layout(plan: CandidatePlan, grid: RateGrid, grid_map: OccupancyMap, cfg: SimConfig) -> _Layout:
    lam = grid.rates
    home = plan.help_location
    dist_home = distance_field(grid_map, home.cell)
    spec = grid.spec
    children = plan.tree.children
    blocks = []
    for c in children:
        if c.kind is ActionKind.WAIT:
            k = math.ceil(c.deadline / cfg.dt - 1e-9)
            pos = np.repeat(np.asarray(c.position, dtype=float)[None], k, axis=0)
            rate = np.full(k, _disc_rate(lam, grid, c.position, cfg.detection_radius))
            nav = np.zeros(k)
        else:
            path = c.path
            k = math.ceil(path.length / path.avg_speed / cfg.dt - 1e-9)
            pos = path.point_at(np.arange(k) * cfg.dt * path.avg_speed).reshape(-1, 2)
            rate = np.array([_disc_rate(lam, grid, p, cfg.detection_radius) for p in pos])
            if c.kind is ActionKind.HOME and not cfg.home_success:
                rate = np.zeros(k)
            nav = np.full(k, path.avg_speed / cfg.l_fail)
        blocks.append((pos.reshape(-1, 2), rate, nav))
    sizes = [len(b[1]) for b in blocks]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    entry = [-1] * (len(children) + 1)
    for i in range(len(children) - 1, -1, -1):
        entry[i] = offsets[i] if sizes[i] else entry[i + 1]
    n = int(offsets[-1])
    next_age = np.empty(n, dtype=int)
    next_nav = np.empty(n, dtype=int)
    for i, k in enumerate(sizes):
        if k == 0:
            continue
        s = np.arange(offsets[i], offsets[i] + k)
        next_age[s] = np.append(s[1:], entry[i + 1])
        next_nav[s] = -1 if cfg.nav_failure_aborts else entry[i + 1]
    pos = np.concatenate([b[0] for b in blocks]) if n else np.empty((0, 2))
    cells = [spec.world_to_cell(p) for p in pos]
    speed = next((c.path.avg_speed for c in children if c.path is not None), 0.5)
    ret = np.array([dist_home[cy, cx] for cx, cy in cells]) / speed if n else np.empty(0)
    return _Layout(np.concatenate([b[1] for b in blocks]) if n else np.empty(0),
                   np.concatenate([b[2] for b in blocks]) if n else np.empty(0),
                   next_age, next_nav, ret, pos, entry[0])


def _found_at(lam, grid, pos, r, u) -> tuple[float, float]:
    """Cell of the detected arrival, drawn in proportion to the cell rates."""
    gx, gy = disc_cells(grid.spec, pos, r)
    w = lam[gy, gx]
    k = min(int(np.searchsorted(np.cumsum(w), u * w.sum(), side="right")), len(w) - 1)
    c = grid.spec.cell_center(gx[k], gy[k])
    return float(c[0]), float(c[1])


def run_batch(plan: CandidatePlan, grid: RateGrid, grid_map: OccupancyMap, cfg: SimConfig,
              seeds: Sequence[int]) -> BatchResult:
    """Run the plan once per seed (instantaneous detectability, vectorized over runs)."""
    if cfg.person_dwell > 0:
        outs = [_run_with_dwell(plan, grid, grid_map, cfg, s) for s in seeds]
        return _from_outcomes(outs, seeds)
    seeds = np.asarray(seeds, dtype=np.int64)
    m = len(seeds)
    lay = _layout(plan, grid, grid_map, cfg)
    lam = grid.rates
    dt = cfg.dt
    state = np.full(m, lay.entry, dtype=int)
    success = np.zeros(m, dtype=bool)
    t_find = np.full(m, np.inf)
    t_r = np.zeros(m)
    cause = np.zeros(m, dtype=int)
    hit_state = np.full(m, -1, dtype=int)
    hit_u = np.zeros(m)
    active = state >= 0
    cause[~active] = 1
    streams = _Streams(seeds, 3)
    max_steps = math.inf if cfg.max_time is None else math.ceil(cfg.max_time / dt - 1e-9)
    step = 0
    with np.errstate(divide="ignore"):
        while active.any() and step < max_steps:
            idx = np.flatnonzero(active)
            u = streams.draw(step, idx)
            s = state[idx]
            t_det = -np.log1p(-u[:, 0]) / lay.rate[s]
            t_nav = -np.log1p(-u[:, 1]) / lay.nav_rate[s]
            found = t_det < dt
            navfail = ~found & (t_nav < dt)
            nxt = np.where(navfail, lay.next_nav[s], lay.next_age[s])

            f = idx[found]
            success[f] = True
            t_find[f] = step * dt + t_det[found]
            t_r[f] = t_find[f] + lay.ret_time[s[found]]
            hit_state[f] = s[found]
            hit_u[f] = u[found, 2]

            ended = ~found & (nxt < 0)
            e = idx[ended]
            t_r[e] = (step + 1) * dt
            cause[e] = np.where(navfail[ended], 2, 1)

            moving = ~found & ~ended
            state[idx[moving]] = nxt[moving]
            active[f] = False
            active[e] = False
            step += 1
    # runs cut off by max_time
    left = np.flatnonzero(active)
    t_r[left] = step * dt
    cause[left] = 1

    found_at = np.full((m, 2), np.nan)
    for i in np.flatnonzero(success):
        found_at[i] = _found_at(lam, grid, lay.pos[hit_state[i]], cfg.detection_radius, hit_u[i])
    return BatchResult(seeds, success, t_find, t_r, cause, found_at)


def _from_outcomes(outs: Sequence[RunOutcome], seeds) -> BatchResult:
    m = len(outs)
    found_at = np.full((m, 2), np.nan)
    for i, o in enumerate(outs):
        if o.success:
            found_at[i] = o.found_at
    return BatchResult(np.asarray(seeds, dtype=np.int64),
                       np.array([o.success for o in outs], dtype=bool),
                       np.array([o.t_find if o.success else np.inf for o in outs]),
                       np.array([o.t_r for o in outs]),
                       np.array([0 if o.success else _CAUSES.index(o.failure_cause) for o in outs]),
                       found_at)


def _run_with_dwell(plan: CandidatePlan, grid: RateGrid, grid_map: OccupancyMap, cfg: SimConfig,
                    seed: int) -> RunOutcome:
    """Single run where each arrival stays detectable in its cell for ``person_dwell`` seconds."""
    rng = np.random.default_rng(int(seed))
    lay = _layout(plan, grid, grid_map, cfg)
    lam = grid.rates
    dt = cfg.dt
    cys, cxs = np.nonzero(lam > 0)
    rates = lam[cys, cxs] * dt
    live = max(1, math.ceil(cfg.person_dwell / dt))
    present = np.zeros((live, len(rates)), dtype=int)  # ring buffer of arrivals per step
    s = lay.entry
    step = 0
    max_steps = math.inf if cfg.max_time is None else math.ceil(cfg.max_time / dt - 1e-9)
    while s >= 0 and step < max_steps:
        present[step % live] = rng.poisson(rates)
        total = present.sum(axis=0)
        gx, gy = disc_cells(grid.spec, lay.pos[s], cfg.detection_radius)
        covered = np.isin(cxs + 1j * cys, gx + 1j * gy) & (total > 0)
        if lay.rate[s] == 0:
            covered[:] = False
        if covered.any():
            k = np.flatnonzero(covered)[0]
            t_find = (step + 1) * dt
            c = grid.spec.cell_center(cxs[k], cys[k])
            return RunOutcome(True, t_find + lay.ret_time[s], t_find, (float(c[0]), float(c[1])),
                              None, int(seed))
        nav = lay.nav_rate[s]
        if nav > 0 and rng.random() < -math.expm1(-nav * dt):
            nxt, why = lay.next_nav[s], NAVIGATION
        else:
            nxt, why = lay.next_age[s], EXHAUSTED
        step += 1
        if nxt < 0:
            return RunOutcome(False, step * dt, failure_cause=why, seed=int(seed))
        s = nxt
    return RunOutcome(False, step * dt, failure_cause=EXHAUSTED, seed=int(seed))


def run_once(plan: CandidatePlan, grid: RateGrid, grid_map: OccupancyMap, cfg: SimConfig,
             seed: int) -> RunOutcome:
    """Execute the plan once; identical seeds give identical outcomes."""
    return run_batch(plan, grid, grid_map, cfg, [seed]).outcome(0)


def return_time(plan: CandidatePlan, grid_map: OccupancyMap, point, avg_speed: float = 0.5) -> float:
    """Drive time from ``point`` back to the plan's help location on a fresh shortest path."""
    here = grid_map.place_at(point)
    if here.cell == plan.help_location.cell:
        return 0.0
    return plan_path(grid_map, here, plan.help_location, avg_speed).duration


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class StrategyReport:
    strategy: str
    batch: BatchResult
    plans: list[CandidatePlan]
    curve_times: tuple[float, ...] = CURVE_TIMES

    @property
    def runs(self) -> int:
        return len(self.batch)

    @property
    def success_rate(self) -> float:
        return float(self.batch.success.mean())

    def _t_r(self) -> np.ndarray:
        return self.batch.t_r[self.batch.success]

    @property
    def t_r_mean(self) -> float:
        t = self._t_r()
        return float(t.mean()) if len(t) else math.nan

    @property
    def t_r_std(self) -> float:
        t = self._t_r()
        return float(t.std(ddof=1)) if len(t) > 1 else math.nan

    def model_mtts(self) -> tuple[float, float]:
        v = np.array([p.score.expected_time_to_success for p in self.plans])
        v = v[np.isfinite(v)]  # plans that never succeed carry no time estimate
        if len(v) == 0:
            return math.nan, math.nan
        return float(v.mean()), float(v.std())

    def model_p_success(self) -> tuple[float, float]:
        v = np.array([p.score.p_success_final for p in self.plans])
        return float(v.mean()), float(v.std())

    def sim_curve(self, times=None) -> np.ndarray:
        return self.batch.success_by(self.curve_times if times is None else times)

    def model_curve(self, times=None) -> np.ndarray:
        times = self.curve_times if times is None else times
        return np.mean([p.score.p_success_at(times) for p in self.plans], axis=0)


@dataclass
class SimReport:
    strategies: list[str]
    reports: dict[str, StrategyReport]
    rows: list[tuple[str, int, int, bool, float, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.strategies)

    def __getitem__(self, name: str) -> StrategyReport:
        return self.reports[name]

    def runs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["strategy", "run_id", "seed", "success", "t_r_s", "failure_cause"])
        for name, run_id, seed, ok, t_r, why in self.rows:
            w.writerow([name, run_id, seed, int(ok), repr(float(t_r)), why])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["strategy", "trials", "P", "t_r_mean_s", "t_r_std_s", "mu_r_inv_mean_s",
                    "mu_r_inv_std_s", "p_s_tmax_mean", "p_s_tmax_std"])
        for name in self.strategies:
            r = self.reports[name]
            w.writerow([name, r.runs, _fmt(r.success_rate), _fmt(r.t_r_mean), _fmt(r.t_r_std),
                        *map(_fmt, r.model_mtts()), *map(_fmt, r.model_p_success())])
        return buf.getvalue()

    def curves_csv(self, times: Sequence[float] | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        first = next(iter(self.reports.values()))
        times = first.curve_times if times is None else tuple(times)
        w.writerow(["strategy", "source"] + [f"p_s_t{_fmt(t)}" for t in times])
        for name in self.strategies:
            r = self.reports[name]
            w.writerow([name, "model"] + [_fmt(v) for v in r.model_curve(times)])
            w.writerow([name, "sim"] + [_fmt(v) for v in r.sim_curve(times)])
        return buf.getvalue()


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return ""
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return f"{x:.6g}"


def seed_schedule(seed: int, runs: int) -> np.ndarray:
    return np.random.default_rng([seed, 99]).integers(0, 2**63 - 1, size=runs, dtype=np.int64)


def evaluate(strategies: Sequence[Strategy | str], problem: PlanningProblem, cfg: SimConfig,
             replans: int = 1, truth: RateGrid | None = None) -> SimReport:
    """Plan with each strategy and run every plan against the same seed schedule.

    Run ``j`` of every strategy uses seed ``j`` of the schedule and plan
    ``j % replans``, where plan ``r`` comes from planner seed ``config.seed + r``.
    Result rows alternate between strategies, rotating the order each round.
    ``truth`` is the grid arrivals are drawn from (default: the planning grid).
    """
    if not strategies:
        raise ValueError("need at least one strategy")
    strategies = [s if isinstance(s, Strategy) else Strategy(StrategyKind(s), problem.config.n_lambda)
                  for s in strategies]
    names = [s.name for s in strategies]
    if len(set(names)) != len(names):
        raise ValueError("duplicate strategy")
    truth = problem.grid if truth is None else truth
    seeds = seed_schedule(cfg.seed, cfg.runs)
    which = np.arange(cfg.runs) % replans
    reports = {}
    for strat in strategies:
        plans = []
        for r in range(replans):
            sub = replace(problem, config=replace(problem.config, seed=problem.config.seed + r))
            plans.append(plan_baseline(sub, strat))
        parts = [run_batch(plans[r], truth, problem.map, cfg, seeds[which == r])
                 for r in range(replans)]
        reports[strat.name] = StrategyReport(strat.name, _merge(parts, which), plans)
    rows = []
    for j in range(cfg.runs):
        k = j % len(names)
        for name in names[k:] + names[:k]:
            b = reports[name].batch
            rows.append((name, j, int(seeds[j]), bool(b.success[j]), float(b.t_r[j]),
                         _CAUSES[b.cause[j]]))
    return SimReport(names, reports, rows)


def _merge(parts: list[BatchResult], which: np.ndarray) -> BatchResult:
    if len(parts) == 1:
        return parts[0]
    m = len(which)
    out = BatchResult(np.empty(m, dtype=np.int64), np.empty(m, dtype=bool), np.empty(m),
                      np.empty(m), np.empty(m, dtype=int), np.empty((m, 2)))
    for r, b in enumerate(parts):
        sel = which == r
        out.seeds[sel] = b.seeds
        out.success[sel] = b.success
        out.t_find[sel] = b.t_find
        out.t_r[sel] = b.t_r
        out.cause[sel] = b.cause
        out.found_at[sel] = b.found_at
    return out
