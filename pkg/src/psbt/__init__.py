"""Person search for a stuck robot: learn where people show up, plan a search
behavior tree, and check it in simulation."""

from .actions import (ActionKind, StochasticAction, make_return_home, make_search, make_wait,
                      wait_deadline)
from .gridmodel import (ArrivalStream, DetectionDisc, GridSpec, Place, RateGrid, disc_cells,
                        rate_in_disc, sample_places, simulate_arrivals, update)
from .navgrid import (NoPathError, OccupancyMap, PathGeometry, Sweep, distance_field, plan_path,
                      sweep_rates)
from .planner import (CandidatePlan, GAParams, PlannerConfig, PlanningProblem, Strategy,
                      StrategyKind, TourGraph, brute_force_otsp, build_graph, enumerate_candidates,
                      plan_baseline, plan_psbt, solve_otsp)
from .sbt import MarkovModel, SearchTree, TreeScore, decompose, score, transient
from .sim import RunOutcome, SimConfig, SimReport, evaluate, run_batch, run_once

__version__ = "0.1.0"

__all__ = [
    "ActionKind", "ArrivalStream", "CandidatePlan", "DetectionDisc", "GAParams", "GridSpec",
    "MarkovModel", "NoPathError", "OccupancyMap", "PathGeometry", "Place", "PlannerConfig",
    "PlanningProblem", "RateGrid", "RunOutcome", "SearchTree", "SimConfig", "SimReport",
    "StochasticAction", "Strategy", "StrategyKind", "Sweep", "TourGraph", "TreeScore",
    "brute_force_otsp", "build_graph", "decompose", "disc_cells", "distance_field",
    "enumerate_candidates", "evaluate", "make_return_home", "make_search", "make_wait",
    "plan_baseline", "plan_path", "plan_psbt", "rate_in_disc", "run_batch", "run_once",
    "sample_places", "score", "simulate_arrivals", "solve_otsp", "sweep_rates", "transient",
    "update", "wait_deadline",
]
