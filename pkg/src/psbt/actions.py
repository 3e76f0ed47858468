"""Stochastic action tuples for waiting, searching along a path and returning home.

Every action carries a success rate mu, failure rate nu, a local deadline, a
piecewise-constant success-rate profile over local time and, for path actions,
an exponential navigation-failure rate ``avg_speed / l_fail``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .gridmodel import DetectionDisc, Place, RateGrid, rate_in_disc
from .navgrid import PathGeometry, Sweep

DEFAULT_CONFIDENCE = 0.9
DEFAULT_L_FAIL = 100.0  # m
DEFAULT_MAX_WAIT = 300.0  # s, deadline of a wait with zero rate


class ActionKind(str, Enum):
    WAIT = "wait"
    SEARCH = "search"
    HOME = "home"


def _check_confidence(p_s_prime: float) -> None:
    if not 0.0 < p_s_prime < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {p_s_prime}")


@dataclass(eq=False)
class StochasticAction:
    kind: ActionKind
    place_refs: tuple[int, ...]
    success_rate: float
    failure_rate: float
    deadline: float
    profile_times: np.ndarray
    profile_rates: np.ndarray
    nav_fail_rate: float = 0.0
    p_s_prime: float = DEFAULT_CONFIDENCE
    valid: bool = True
    degenerate: bool = False
    path: PathGeometry | None = None
    position: tuple[float, float] | None = None
    # law-of-total-probability guard for path actions: success by 1/nu vs. its bound
    guard_value: float | None = None
    guard_bound: float | None = None
    _cum: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.profile_times = np.asarray(self.profile_times, dtype=float)
        self.profile_rates = np.asarray(self.profile_rates, dtype=float)
        if np.any(self.profile_rates < 0):
            raise ValueError("success profile must be non-negative")
        seg = np.diff(np.append(self.profile_times, self._profile_end()))
        self._cum = np.concatenate([[0.0], np.cumsum(self.profile_rates * seg)])

    def _profile_end(self) -> float:
        if self.kind is ActionKind.WAIT:
            return self.profile_times[-1]
        return max(self.deadline, self.profile_times[-1])

    @property
    def label(self) -> str:
        if self.kind is ActionKind.WAIT:
            return f"W{self.place_refs[0]}"
        if self.kind is ActionKind.HOME:
            return "Home"
        return f"S{self.place_refs[0]}→{self.place_refs[1]}"

    def rate_at(self, t):
        """Success rate at local time ``t`` (held constant between profile samples)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.profile_times, t + 1e-9, side="right") - 1
        out = self.profile_rates[np.clip(idx, 0, None)]
        out = np.where(t < 0, 0.0, out)
        if self.kind is not ActionKind.WAIT:
            out = np.where(t >= self.deadline, 0.0, out)
        return out

    def cumulative_rate(self, t):
        """Integral of the success rate over ``[0, t]``."""
        t = np.asarray(t, dtype=float)
        if self.kind is ActionKind.WAIT:
            return self.success_rate * np.clip(t, 0.0, None)
        tc = np.clip(t, 0.0, self._profile_end())
        idx = np.clip(np.searchsorted(self.profile_times, tc, side="right") - 1, 0, None)
        return self._cum[idx] + self.profile_rates[idx] * (tc - self.profile_times[idx])

    def p_success(self, t):
        """Probability of having found someone by local time ``t``."""
        return 1.0 - np.exp(-self.cumulative_rate(t))

    def p_fail(self, t):
        """Failure probability by local time ``t``; a step at the deadline for waits."""
        t = np.asarray(t, dtype=float)
        if self.kind is ActionKind.WAIT:
            final = 1.0 if self.degenerate else 1.0 - self.p_s_prime
            return np.where(t >= self.deadline, final, 0.0)
        nav = 1.0 - np.exp(-self.nav_fail_rate * np.clip(t, 0.0, None))
        if self.kind is ActionKind.HOME:
            return nav
        t_fail = 1.0 / self.failure_rate
        return np.where(t >= t_fail, 1.0 - self.p_success(t_fail), nav)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "label": self.label,
            "place_refs": list(self.place_refs),
            "success_rate": self.success_rate,
            "failure_rate": self.failure_rate,
            "deadline": self.deadline,
            "nav_fail_rate": self.nav_fail_rate,
            "p_s_prime": self.p_s_prime,
            "valid": self.valid,
            "degenerate": self.degenerate,
            "profile": {"t_s": self.profile_times.tolist(), "rate": self.profile_rates.tolist()},
            "path": None if self.path is None else self.path.to_dict(),
            "position": None if self.position is None else list(self.position),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StochasticAction":
        path = None
        if d.get("path") is not None:
            p = d["path"]
            path = PathGeometry(np.array(p["waypoints"]), p["length"], p["avg_speed"])
        return cls(ActionKind(d["kind"]), tuple(d["place_refs"]), d["success_rate"],
                   d["failure_rate"], d["deadline"], d["profile"]["t_s"], d["profile"]["rate"],
                   d["nav_fail_rate"], d["p_s_prime"], d["valid"], d["degenerate"], path,
                   None if d.get("position") is None else tuple(d["position"]))


def wait_deadline(mu: float, p_s_prime: float) -> float:
    """Waiting time after which a wait with rate ``mu`` has succeeded with probability ``p_s_prime``."""
    return -math.log1p(-p_s_prime) / mu


def make_wait(place: Place, grid: RateGrid, disc_radius: float = 2.0,
              p_s_prime: float = DEFAULT_CONFIDENCE, max_wait: float = DEFAULT_MAX_WAIT,
              max_variance: float | None = None) -> StochasticAction:
    """Wait at ``place`` until someone enters the detection disc or the deadline passes.

    A disc without rate mass gives a degenerate action: zero success, deadline
    ``max_wait``.
    """
    _check_confidence(p_s_prime)
    mu = rate_in_disc(grid, DetectionDisc(place.position, disc_radius), max_variance)
    if mu > 0:
        deadline = wait_deadline(mu, p_s_prime)
        degenerate = False
    else:
        mu, deadline, degenerate = 0.0, float(max_wait), True
    return StochasticAction(ActionKind.WAIT, (place.id,), mu, 1.0 / deadline, deadline,
                            [0.0], [mu], 0.0, p_s_prime, True, degenerate,
                            position=tuple(place.position))


def path_success_rate(sweep: Sweep, p_s_prime: float) -> float:
    """Inverse of the earliest confident detection time along a sweep (0 if nothing to see)."""
    rates = np.asarray(sweep.rates)
    hit = rates > 0
    if not hit.any():
        return 0.0
    with np.errstate(over="ignore"):
        t = np.asarray(sweep.times)[hit] - math.log1p(-p_s_prime) / rates[hit]
    return 1.0 / float(t.min())


def _path_action(kind: ActionKind, path: PathGeometry, sweep: Sweep, p_s_prime: float,
                 l_fail: float, place_refs: tuple[int, ...]) -> StochasticAction:
    _check_confidence(p_s_prime)
    if not l_fail > 0:
        raise ValueError("l_fail must be positive")
    if len(sweep) == 0:
        raise ValueError("empty sweep")
    if not path.length > 0:
        raise ValueError("path action needs a path of positive length")
    v = path.avg_speed
    nav = v / l_fail
    nu_sp = v / path.length + nav
    nu = nav if kind is ActionKind.HOME else nu_sp
    action = StochasticAction(kind, tuple(place_refs), path_success_rate(sweep, p_s_prime), nu,
                              path.duration, sweep.times, sweep.rates, nav, p_s_prime,
                              path=path)
    action.guard_value = float(action.p_success(1.0 / nu_sp))
    action.guard_bound = math.exp(-path.length / (l_fail + path.length))
    action.valid = action.guard_value <= action.guard_bound
    return action


def make_search(path: PathGeometry, sweep: Sweep, p_s_prime: float = DEFAULT_CONFIDENCE,
                l_fail: float = DEFAULT_L_FAIL, place_refs: tuple[int, int] = (0, 1)
                ) -> StochasticAction:
    """Drive along ``path`` watching for people.

    Fails when the end is reached without detection, or earlier through a
    navigation failure. ``valid`` is False when the success probability by
    ``1/nu`` exceeds ``exp(-l / (l_fail + l))``; such actions must not be used in
    a tree.
    """
    return _path_action(ActionKind.SEARCH, path, sweep, p_s_prime, l_fail, place_refs)


def make_return_home(path: PathGeometry, sweep: Sweep | None = None,
                     p_s_prime: float = DEFAULT_CONFIDENCE, l_fail: float = DEFAULT_L_FAIL,
                     place_refs: tuple[int, int] = (1, 0)) -> StochasticAction:
    """Drive back to the help location; only a navigation failure counts as failing.

    A zero-length path (the robot is already home) gives a degenerate action
    with deadline 0 that the chain passes straight through.
    """
    if path.length == 0:
        _check_confidence(p_s_prime)
        return StochasticAction(ActionKind.HOME, tuple(place_refs), 0.0, 0.0, 0.0, [0.0], [0.0],
                                0.0, p_s_prime, True, True, path=path)
    return _path_action(ActionKind.HOME, path, sweep, p_s_prime, l_fail, place_refs)
