"""Person-search behavior trees and their transient analysis as a Markov chain.

A tree is a fallback (selector) over stochastic actions: a child's success
ends the tree successfully, a child's failure ticks the next child, and the
tree fails when its last child fails. The chain's transient states are
``(child, age bucket)`` pairs, which makes deterministic deadlines exact. Two
absorbing states collect success and failure mass.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .actions import ActionKind, StochasticAction

DEFAULT_DT = 1.0
DEFAULT_T_MAX = 200.0

_ROW_TOL = 1e-9


@dataclass
class SearchTree:
    children: list[StochasticAction]
    label: str | None = None

    def __post_init__(self):
        self.children = list(self.children)
        if not self.children:
            raise ValueError("a search tree needs at least one child")
        if self.label is None:
            self.label = ", ".join(c.label for c in self.children)

    def __len__(self) -> int:
        return len(self.children)

    def validate(self) -> "SearchTree":
        """Raise ValueError unless the tree ends in its only return-home action and all
        children are valid."""
        homes = [i for i, c in enumerate(self.children) if c.kind is ActionKind.HOME]
        if homes != [len(self.children) - 1]:
            raise ValueError(f"tree {self.label!r} must end with exactly one return-home action")
        bad = [c.label for c in self.children if not c.valid]
        if bad:
            raise ValueError(f"tree {self.label!r} holds invalid actions: {bad}")
        return self

    @property
    def valid(self) -> bool:
        try:
            self.validate()
        except ValueError:
            return False
        return True

    def to_dict(self) -> dict:
        return {"label": self.label,
                "actions": [dict(c.to_dict(), order=i) for i, c in enumerate(self.children)]}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchTree":
        acts = sorted(d["actions"], key=lambda a: a["order"])
        return cls([StochasticAction.from_dict(a) for a in acts], d.get("label"))


@dataclass
class MarkovModel:
    matrix: sp.csr_matrix  # row-stochastic one-step transition matrix
    dt: float
    child_index: np.ndarray  # per transient state
    age: np.ndarray  # local age in seconds per transient state
    pi0: np.ndarray
    truncated: bool = False

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    @property
    def success_index(self) -> int:
        return self.n_states - 2

    @property
    def failure_index(self) -> int:
        return self.n_states - 1

    def check_stochastic(self) -> None:
        rows = np.asarray(self.matrix.sum(axis=1)).ravel()
        drift = np.abs(rows - 1.0).max()
        if drift > _ROW_TOL:
            raise AssertionError(f"transition rows drift from 1 by {drift:.3g}")
        if self.matrix.min() < 0:
            raise AssertionError("negative transition probability")


@dataclass
class TreeScore:
    times: np.ndarray
    p_success: np.ndarray
    p_fail: np.ndarray
    expected_time_to_success: float
    label: str = ""

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    @property
    def p_success_final(self) -> float:
        return float(self.p_success[-1])

    def _index(self, t) -> np.ndarray:
        dt = self.times[1] - self.times[0] if len(self.times) > 1 else 1.0
        return np.clip(np.floor(np.asarray(t, dtype=float) / dt + 1e-9).astype(int),
                       0, len(self.times) - 1)

    def p_success_at(self, t):
        return self.p_success[self._index(t)]

    def p_fail_at(self, t):
        return self.p_fail[self._index(t)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_s", "p_success", "p_fail"])
        for t, s, f in zip(self.times, self.p_success, self.p_fail):
            w.writerow([repr(float(t)), repr(float(s)), repr(float(f))])
        return buf.getvalue()


def _n_buckets(deadline: float, dt: float) -> int:
    return max(0, math.ceil(deadline / dt - 1e-9))


def decompose(tree: SearchTree | Sequence[StochasticAction], dt: float = DEFAULT_DT,
              horizon: float | None = None, home_success: bool = True,
              nav_failure_aborts: bool = False) -> MarkovModel:
    """Build the one-step transition matrix of the tree's execution flow.

    In state ``(i, k)`` (child i at local age ``k*dt``) one step moves

    * ``p_s = 1 - exp(-mu_i(k dt) dt)`` to SUCCESS,
    * ``(1 - p_s)(1 - exp(-nav_i dt))`` to the next child's entry (or FAILURE
      after the last child, or always with ``nav_failure_aborts``),
    * the rest to ``(i, k+1)``; from the last age bucket it goes to the next
      child's entry instead, so a deadline expiry ticks the next child.

    Deadlines are rounded up to whole steps. ``horizon`` truncates age buckets
    that cannot be reached within that time. With ``home_success=False`` people
    met on the way home are ignored.
    """
    children = tree.children if isinstance(tree, SearchTree) else list(tree)
    if not children:
        raise ValueError("empty tree")
    if not dt > 0:
        raise ValueError("dt must be positive")
    # one spare bucket so truncation never routes mass onward within the horizon
    cap = None if horizon is None else max(1, math.ceil(horizon / dt - 1e-9)) + 1

    sizes = []
    truncated = False
    for c in children:
        k = _n_buckets(c.deadline, dt)
        if cap is not None and k > cap:
            k, truncated = cap, True
        sizes.append(k)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    n_trans = int(offsets[-1])
    succ, fail = n_trans, n_trans + 1
    n = n_trans + 2

    # entry state of the first non-empty child at or after i
    entry = [fail] * (len(children) + 1)
    for i in range(len(children) - 1, -1, -1):
        entry[i] = offsets[i] if sizes[i] > 0 else entry[i + 1]

    rows, cols, vals = [], [], []
    child_index = np.empty(n_trans, dtype=int)
    ages = np.empty(n_trans)
    for i, c in enumerate(children):
        k = sizes[i]
        if k == 0:
            continue
        idx = np.arange(offsets[i], offsets[i] + k)
        age = np.arange(k) * dt
        child_index[idx] = i
        ages[idx] = age
        mu = np.asarray(c.rate_at(age), dtype=float)
        if c.kind is ActionKind.HOME and not home_success:
            mu = np.zeros_like(mu)
        p_s = -np.expm1(-mu * dt)
        p_n = (1.0 - p_s) * -math.expm1(-c.nav_fail_rate * dt)
        p_a = 1.0 - p_s - p_n
        nav_target = fail if nav_failure_aborts else entry[i + 1]
        after = np.append(idx[1:], entry[i + 1])
        rows += [idx, idx, idx]
        cols += [np.full(k, succ), np.full(k, nav_target), after]
        vals += [p_s, p_n, p_a]
    rows += [np.array([succ, fail])]
    cols += [np.array([succ, fail])]
    vals += [np.ones(2)]
    matrix = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(n, n)).tocsr()
    pi0 = np.zeros(n)
    pi0[entry[0]] = 1.0
    model = MarkovModel(matrix, dt, child_index, ages, pi0, truncated)
    model.check_stochastic()
    return model


def transient(model: MarkovModel, t_max: float = DEFAULT_T_MAX, label: str = "") -> TreeScore:
    """Propagate the state distribution step by step up to ``t_max``.

    Records success and failure mass after every step. The expected time to
    success is the mean absorption time into SUCCESS conditioned on success by
    ``t_max`` (inf when nothing succeeds).
    """
    if t_max < model.dt - 1e-12:
        raise ValueError("t_max must be at least one step")
    steps = int(round(t_max / model.dt))
    pt = model.matrix.T.tocsr()
    pi = model.pi0.copy()
    s_idx, f_idx = model.success_index, model.failure_index
    p_s = np.empty(steps + 1)
    p_f = np.empty(steps + 1)
    p_s[0], p_f[0] = pi[s_idx], pi[f_idx]
    for k in range(1, steps + 1):
        pi = pt @ pi
        p_s[k], p_f[k] = pi[s_idx], pi[f_idx]
    total = pi.sum()
    if abs(total - 1.0) > _ROW_TOL * max(1, steps):
        raise AssertionError(f"probability mass drifted to {total!r}")
    times = np.arange(steps + 1) * model.dt
    final = p_s[-1]
    if final > 0:
        mtts = float(np.sum(times[1:] * np.diff(p_s)) / final)
    else:
        mtts = math.inf
    return TreeScore(times, p_s, p_f, mtts, label)


def score(tree: SearchTree, dt: float = DEFAULT_DT, t_max: float = DEFAULT_T_MAX,
          **kwargs) -> TreeScore:
    """Success/failure curves of ``tree`` on ``[0, t_max]``; kwargs go to :func:`decompose`."""
    model = decompose(tree, dt, horizon=t_max, **kwargs)
    label = tree.label if isinstance(tree, SearchTree) else ""
    return transient(model, t_max, label)
