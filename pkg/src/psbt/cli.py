"""Command-line front end: train rate grids, plan searches, evaluate strategies.

    psbt train --detections log.csv --map map.json --out grid.json
    psbt plan --config experiment.json
    psbt evaluate --config experiment.json
    psbt scenario stor --out-dir runs/stor

Exit codes: 0 on success, 2 for configuration errors, 3 for malformed input files.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import scenarios
from .gridmodel import GridSpec, RateGrid, update
from .navgrid import OccupancyMap
from .planner import (GAParams, PlannerConfig, PlanningProblem, Strategy, StrategyKind,
                      plan_psbt)
from .sim import SimConfig, evaluate

EXIT_OK, EXIT_CONFIG, EXIT_INPUT = 0, 2, 3


class ConfigError(Exception):
    """Invalid experiment configuration (exit code 2)."""


class InputFormatError(Exception):
    """Malformed input file (exit code 3)."""


# ---------------------------------------------------------------------------
# configuration


@dataclasses.dataclass
class ExperimentConfig:
    map: str | None = None
    grid: str | None = None
    output_dir: str = "out"
    help_location: tuple[float, float] | None = None
    grid_width: int = 50
    grid_height: int = 25
    cell_size: float = 1.0
    disc_radius: float = 2.0
    p_s_prime: float = 0.9
    dt: float = 1.0
    l_fail: float = 100.0
    avg_speed: float = 0.5
    n_places: int = 6
    t_max: float = 200.0
    max_variance: float = 1e-3
    max_distance: float = 40.0
    min_separation: float | None = None
    confident_only: bool = True
    max_wait: float = 300.0
    n_lambda: int = 50
    home_success: bool = True
    nav_failure_aborts: bool = False
    strategies: tuple[str, ...] = ("PSBT", "W", "GM", "GC", "NW", "RND")
    runs: int = 1000
    replans: int = 1
    person_dwell: float = 0.0
    curve_t_max: float = 200.0
    curve_step: float = 20.0
    seed: int = 0
    keep_candidates: bool = False
    record_time: bool = False
    base_dir: str = dataclasses.field(default=".", repr=False)

    _POSITIVE = ("cell_size", "disc_radius", "dt", "l_fail", "avg_speed", "t_max", "max_variance",
                 "max_distance", "max_wait", "curve_t_max", "curve_step")
    _COUNTS = ("grid_width", "grid_height", "n_places", "n_lambda", "runs", "replans")

    @classmethod
    def fields(cls) -> dict[str, dataclasses.Field]:
        return {f.name: f for f in dataclasses.fields(cls) if f.name != "base_dir"}

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "ExperimentConfig":
        known = cls.fields()
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        cfg = cls(base_dir=str(base_dir))
        for k, v in d.items():
            setattr(cfg, k, v)
        return cfg.validated()

    def validated(self) -> "ExperimentConfig":
        def num(name, integer=False):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or \
                    (integer and not float(v).is_integer()):
                raise ConfigError(f"{name}: expected {'an integer' if integer else 'a number'}, got {v!r}")
            return int(v) if integer else float(v)

        for name in self._POSITIVE:
            v = num(name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name}: must be positive, got {v!r}")
            setattr(self, name, v)
        for name in self._COUNTS:
            v = num(name, integer=True)
            if v < 1:
                raise ConfigError(f"{name}: must be >= 1, got {v!r}")
            setattr(self, name, v)
        self.seed = num("seed", integer=True)
        self.person_dwell = num("person_dwell")
        if self.person_dwell < 0:
            raise ConfigError("person_dwell: must be non-negative")
        self.p_s_prime = num("p_s_prime")
        if not 0 < self.p_s_prime < 1:
            raise ConfigError(f"p_s_prime: must lie in (0, 1), got {self.p_s_prime!r}")
        if self.min_separation is not None:
            self.min_separation = num("min_separation")
            if self.min_separation < 0:
                raise ConfigError("min_separation: must be non-negative")
        for name in ("confident_only", "home_success", "nav_failure_aborts", "keep_candidates",
                     "record_time"):
            if not isinstance(getattr(self, name), bool):
                raise ConfigError(f"{name}: expected true or false")
        if self.t_max < self.dt:
            raise ConfigError("t_max: must be at least dt")
        if self.help_location is not None:
            hl = self.help_location
            if not (isinstance(hl, (list, tuple)) and len(hl) == 2 and
                    all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in hl)):
                raise ConfigError(f"help_location: expected [x, y], got {hl!r}")
            self.help_location = (float(hl[0]), float(hl[1]))
        if isinstance(self.strategies, str) or not self.strategies:
            raise ConfigError("strategies: expected a non-empty list")
        names = []
        for s in self.strategies:
            try:
                names.append(StrategyKind(str(s).upper()).value)
            except ValueError:
                raise ConfigError(f"strategies: unknown strategy {s!r}; "
                                  f"choose from {[k.value for k in StrategyKind]}") from None
        if len(set(names)) != len(names):
            raise ConfigError("strategies: duplicate entries")
        self.strategies = tuple(names)
        for name in ("map", "grid", "output_dir"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, str):
                raise ConfigError(f"{name}: expected a path string")
        return self

    def path(self, name: str, must_exist: bool = True) -> Path:
        v = getattr(self, name)
        if v is None:
            raise ConfigError(f"{name}: required")
        p = Path(v)
        if not p.is_absolute():
            p = Path(self.base_dir) / p
        if must_exist and not p.exists():
            raise ConfigError(f"{name}: file not found: {p}")
        return p

    def planner_config(self) -> PlannerConfig:
        return PlannerConfig(n_places=self.n_places, disc_radius=self.disc_radius,
                             p_s_prime=self.p_s_prime, dt=self.dt, l_fail=self.l_fail,
                             avg_speed=self.avg_speed, t_max=self.t_max,
                             max_variance=self.max_variance, max_distance=self.max_distance,
                             min_separation=self.min_separation,
                             confident_only=self.confident_only, max_wait=self.max_wait,
                             n_lambda=self.n_lambda, home_success=self.home_success,
                             nav_failure_aborts=self.nav_failure_aborts, seed=self.seed,
                             ga=GAParams())

    def sim_config(self) -> SimConfig:
        return SimConfig(dt=self.dt, runs=self.runs, detection_radius=self.disc_radius,
                         seed=self.seed, person_dwell=self.person_dwell, l_fail=self.l_fail,
                         home_success=self.home_success,
                         nav_failure_aborts=self.nav_failure_aborts)

    def curve_times(self) -> np.ndarray:
        k = int(math.floor(self.curve_t_max / self.curve_step + 1e-9))
        return np.arange(1, k + 1) * self.curve_step

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.fields()}
        d["strategies"] = list(self.strategies)
        if self.help_location is not None:
            d["help_location"] = list(self.help_location)
        return d


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: invalid JSON at line {e.lineno}: {e.msg}") from None
    if not isinstance(d, dict):
        raise ConfigError("config: top level must be an object")
    d.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig.from_dict(d, base_dir=path.parent)


def _load_map(cfg: ExperimentConfig) -> OccupancyMap:
    p = cfg.path("map")
    try:
        return OccupancyMap.load(p, cell_size=cfg.cell_size)
    except (ValueError, KeyError, TypeError, IndexError) as e:
        raise InputFormatError(f"{p}: cannot read occupancy map: {e}") from None


def _load_grid(path: Path) -> RateGrid:
    try:
        return RateGrid.load(path)
    except (ValueError, KeyError, TypeError, IndexError) as e:
        raise InputFormatError(f"{path}: cannot read rate grid: {e}") from None


def _problem(cfg: ExperimentConfig) -> PlanningProblem:
    grid_map = _load_map(cfg)
    grid = _load_grid(cfg.path("grid"))
    if grid.spec.shape != grid_map.blocked.shape:
        raise ConfigError(f"grid: shape {grid.spec.shape} does not match map "
                          f"{grid_map.blocked.shape}")
    if cfg.help_location is None:
        raise ConfigError("help_location: required")
    try:
        return PlanningProblem.at(grid_map, grid, cfg.help_location, cfg.planner_config())
    except ValueError as e:
        raise ConfigError(f"help_location: {e}") from None


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------------------
# train

DETECTION_COLUMNS = ("time_s", "robot_x", "robot_y", "person_x", "person_y")


def read_detections(path) -> list[tuple[float, float, float, float | None, float | None]]:
    """Parse the detection log; raises InputFormatError naming the bad line."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return rows
        if tuple(h.strip() for h in header) != DETECTION_COLUMNS:
            raise InputFormatError(f"{path}:1: expected header {','.join(DETECTION_COLUMNS)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) not in (3, 5):
                raise InputFormatError(f"{path}:{line}: expected 3 or 5 fields, got {len(row)}")
            try:
                t, rx, ry = (float(c) for c in row[:3])
                px = py = None
                if len(row) == 5 and (row[3].strip() or row[4].strip()):
                    px, py = float(row[3]), float(row[4])
            except ValueError:
                raise InputFormatError(f"{path}:{line}: non-numeric field") from None
            if not all(math.isfinite(x) for x in (t, rx, ry) + ((px, py) if px is not None else ())):
                raise InputFormatError(f"{path}:{line}: non-finite value")
            if t < 0:
                raise InputFormatError(f"{path}:{line}: negative time")
            rows.append((t, rx, ry, px, py))
    return rows


def train_grid(rows, spec: GridSpec, dt: float = 1.0, disc_radius: float = 2.0) -> RateGrid:
    """Replay detections in time order through the Bayesian update, one window per ``dt``.

    Windows run contiguously from the first to the last row. The robot pose of a
    window is its last logged pose, carried forward through windows without rows.
    Detections outside the map are ignored.
    """
    grid = RateGrid(spec)
    if not rows:
        return grid
    rows = sorted(rows, key=lambda r: r[0])
    windows: dict[int, list] = {}
    for r in rows:
        windows.setdefault(int(math.floor(r[0] / dt + 1e-9)), []).append(r)
    first, last = min(windows), max(windows)
    pose = None
    for k in range(first, last + 1):
        counts: dict[tuple[int, int], int] = {}
        for _, rx, ry, px, py in windows.get(k, ()):
            pose = (rx, ry)
            if px is not None and spec.contains_point((px, py)):
                c = spec.world_to_cell((px, py))
                counts[c] = counts.get(c, 0) + 1
        update(grid, pose, counts, disc_radius, duration=dt)
    return grid


def cmd_train(args) -> int:
    if not args.dt > 0 or not args.disc_radius > 0:
        raise ConfigError("dt and disc_radius must be positive")
    if args.map:
        try:
            spec = OccupancyMap.load(args.map, cell_size=args.cell_size).spec
        except FileNotFoundError:
            raise ConfigError(f"map: file not found: {args.map}") from None
        except (ValueError, KeyError, TypeError, IndexError) as e:
            raise InputFormatError(f"{args.map}: cannot read occupancy map: {e}") from None
    else:
        spec = GridSpec(args.width, args.height, args.cell_size)
    try:
        rows = read_detections(args.detections)
    except FileNotFoundError:
        raise ConfigError(f"detections: file not found: {args.detections}") from None
    grid = train_grid(rows, spec, args.dt, args.disc_radius)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    grid.save(out)
    print(f"cells={spec.width_cells}x{spec.height_cells} rows={len(rows)} "
          f"alpha_total={grid.alpha.sum():.6g} beta_total={grid.beta.sum():.6g} "
          f"max_rate={grid.rates.max():.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plan / evaluate


def cmd_plan(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    problem = _problem(cfg)
    out = cfg.path("output_dir", must_exist=False)
    plan = plan_psbt(problem, keep_candidates=cfg.keep_candidates)
    d = plan.to_dict(include_timing=cfg.record_time, curve_ref="p_curve.csv")
    if cfg.keep_candidates:
        d["candidates"] = [{"index": c.index, "label": c.tree.label,
                            "mask": None if c.mask is None else list(c.mask),
                            "p_success_t_max": c.score.p_success_final,
                            "expected_time_to_success":
                                c.score.expected_time_to_success
                                if math.isfinite(c.score.expected_time_to_success) else None}
                           for c in plan.meta["candidates"]]
    _write(out / "plan.json", json.dumps(d, indent=2, sort_keys=True) + "\n")
    _write(out / "p_curve.csv", plan.score.to_csv())
    print(f"plan {plan.tree.label}")
    print(f"p_success({cfg.t_max:g}s)={plan.score.p_success_final:.4f} "
          f"candidates={plan.meta['n_candidates']} excluded={plan.meta['n_excluded']} "
          f"planning_time={plan.meta['planning_time_s']:.2f}s")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    problem = _problem(cfg)
    out = cfg.path("output_dir", must_exist=False)
    report = evaluate([Strategy(s, cfg.n_lambda) for s in cfg.strategies], problem,
                      cfg.sim_config(), replans=cfg.replans)
    times = cfg.curve_times()
    _write(out / "runs.csv", report.runs_csv())
    _write(out / "summary.csv", report.summary_csv())
    _write(out / "curves.csv", report.curves_csv(times))
    print(report.summary_csv(), end="")
    return EXIT_OK


def cmd_scenario(args) -> int:
    makers = {"stor": scenarios.stor_environment, "cafe": scenarios.cafe_environment,
              "zero": scenarios.zero_environment}
    if args.name.startswith("random-"):
        try:
            env = scenarios.random_environment(int(args.name.split("-", 1)[1]))
        except ValueError:
            raise ConfigError(f"scenario: bad random seed in {args.name!r}") from None
    elif args.name in makers:
        env = makers[args.name]()
    else:
        raise ConfigError(f"scenario: unknown name {args.name!r}; choose from "
                          f"{sorted(makers)} or random-<seed>")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env.map.save(out / "map.json")
    env.grid.save(out / "grid.json")
    cfg = ExperimentConfig(map="map.json", grid="grid.json", output_dir="results",
                           help_location=env.help_point).to_dict()
    _write(out / "experiment.json", json.dumps(cfg, indent=2) + "\n")
    print(f"wrote {out / 'experiment.json'}")
    return EXIT_OK


def _overrides(args) -> dict[str, Any]:
    return {"seed": args.seed, "runs": getattr(args, "runs", None),
            "output_dir": args.output_dir, "n_places": args.n_places}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psbt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="learn a rate grid from a detection log")
    t.add_argument("--detections", required=True,
                   help="CSV with columns time_s,robot_x,robot_y,person_x,person_y")
    t.add_argument("--map", help="occupancy map (.json or .pgm) defining the grid shape")
    t.add_argument("--width", type=int, default=50)
    t.add_argument("--height", type=int, default=25)
    t.add_argument("--cell-size", type=float, default=1.0)
    t.add_argument("--dt", type=float, default=1.0, help="observation window in seconds")
    t.add_argument("--disc-radius", type=float, default=2.0)
    t.add_argument("--out", required=True, help="output grid JSON")
    t.set_defaults(func=cmd_train)

    for name, func, hlp in (("plan", cmd_plan, "plan a search from the help location"),
                            ("evaluate", cmd_evaluate, "simulate and compare strategies")):
        c = sub.add_parser(name, help=hlp)
        c.add_argument("--config", required=True, help="experiment JSON")
        c.add_argument("--seed", type=int)
        c.add_argument("--output-dir")
        c.add_argument("--n-places", type=int)
        if name == "evaluate":
            c.add_argument("--runs", type=int)
        c.set_defaults(func=func)

    s = sub.add_parser("scenario", help="write a synthetic environment and experiment config")
    s.add_argument("name", help="stor, cafe, zero or random-<seed>")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_scenario)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InputFormatError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
