import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psbt.actions import (ActionKind, make_return_home, make_search, make_wait,
                          path_success_rate, wait_deadline)
from psbt.gridmodel import GridSpec, Place, RateGrid, simulate_arrivals, disc_cells
from psbt.navgrid import PathGeometry, Sweep, sweep_rates, sweep_times


def straight(length, speed=0.5):
    return PathGeometry.from_points([(0.0, 0.0), (length, 0.0)], speed)


def sweep_for(path, rate_fn, dt=1.0):
    t = sweep_times(path.duration, dt)
    return Sweep(t, np.array([rate_fn(x) for x in t], dtype=float))


def grid_with_disc_rate(mu, center=(5.5, 5.5)):
    spec = GridSpec(11, 11)
    lam = np.zeros(spec.shape)
    gx, gy = disc_cells(spec, center, 2.0)
    lam[gy, gx] = mu / len(gx)
    return RateGrid.from_rates(lam, spec)


class TestWait:
    def test_deadline_and_rates(self):
        a = make_wait(Place(1, (5.5, 5.5), (5, 5)), grid_with_disc_rate(0.1))
        assert a.kind is ActionKind.WAIT
        assert a.success_rate == pytest.approx(0.1)
        assert a.deadline == pytest.approx(23.0259, abs=1e-4)
        assert a.failure_rate == pytest.approx(0.043429, abs=1e-6)
        assert a.p_success(10.0) == pytest.approx(1 - math.exp(-1), abs=1e-4)
        assert 1 - a.p_success(a.deadline) == pytest.approx(0.1, abs=1e-12)

    def test_failure_step(self):
        a = make_wait(Place(1, (5.5, 5.5), (5, 5)), grid_with_disc_rate(0.1))
        assert a.p_fail(a.deadline - 1e-6) == 0.0
        assert a.p_fail(a.deadline) == pytest.approx(0.1)

    @given(st.floats(1e-4, 10), st.floats(0.05, 0.99))
    def test_survival_at_deadline(self, mu, p):
        assert math.exp(-mu * wait_deadline(mu, p)) == pytest.approx(1 - p)

    def test_zero_rate_is_degenerate(self):
        a = make_wait(Place(1, (5.5, 5.5), (5, 5)), RateGrid.from_rates(np.zeros((11, 11))),
                      max_wait=120.0)
        assert a.degenerate and a.deadline == 120.0
        assert np.all(a.p_success(np.linspace(0, 500, 11)) == 0)
        assert a.p_fail(120.0) == 1.0

    @pytest.mark.parametrize("p", [0.0, 1.0, 1.5])
    def test_bad_confidence(self, p):
        with pytest.raises(ValueError):
            make_wait(Place(1, (5.5, 5.5), (5, 5)), grid_with_disc_rate(0.1), p_s_prime=p)

    def test_matches_arrival_stream(self):
        # gaps between arrivals inside the disc are exponential with the wait rate
        g = grid_with_disc_rate(0.1)
        a = make_wait(Place(1, (5.5, 5.5), (5, 5)), g)
        s = simulate_arrivals(g, 1.0e6, dt=10.0, seed=2)
        gaps = np.sort(np.diff(s.times))
        n = len(gaps)
        assert n > 90_000
        cdf = np.asarray(a.p_success(gaps))
        ks = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))
        assert ks < 0.01


class TestSearch:
    def test_failure_rate_example(self):
        path = straight(50.0)
        a = make_search(path, sweep_for(path, lambda t: 0.0), l_fail=100.0)
        assert a.failure_rate == pytest.approx(0.015)
        assert 1 / a.failure_rate == pytest.approx(66.67, abs=0.01)
        assert a.success_rate == 0.0
        assert np.all(a.p_success(np.linspace(0, 200, 9)) == 0)

    def test_uniform_profile(self):
        path = straight(50.0)
        a = make_search(path, sweep_for(path, lambda t: 0.1))
        assert 1 / a.success_rate == pytest.approx(23.0259, abs=1e-4)

    def test_two_sample_profile(self):
        sw = Sweep(np.array([0.0, 30.0]), np.array([0.01, 0.2]))
        expected = min(0 - math.log(0.1) / 0.01, 30 - math.log(0.1) / 0.2)
        assert expected == pytest.approx(41.51, abs=0.01)
        assert 1 / path_success_rate(sw, 0.9) == pytest.approx(expected)

    def test_piecewise_success_probability(self):
        path = straight(20.0)  # 40 s
        a = make_search(path, sweep_for(path, lambda t: 0.01 if t < 10 else 0.02))
        assert a.p_success(25.0) == pytest.approx(1 - math.exp(-(0.1 + 15 * 0.02)))
        assert a.p_success(1000.0) == pytest.approx(1 - math.exp(-(0.1 + 30 * 0.02)))

    def test_failure_breakpoint(self):
        path = straight(50.0)
        a = make_search(path, sweep_for(path, lambda t: 0.001))
        t_fail = 1 / a.failure_rate
        assert a.p_fail(10.0) == pytest.approx(1 - math.exp(-0.005 * 10))
        assert a.p_fail(t_fail + 1) == pytest.approx(1 - a.p_success(t_fail))

    def test_guard_rejects_busy_paths(self):
        path = straight(20.0)
        good = make_search(path, sweep_for(path, lambda t: 0.005))
        bad = make_search(path, sweep_for(path, lambda t: 0.5))
        assert good.valid and not bad.valid
        bound = math.exp(-20 / 120)
        assert bad.guard_bound == pytest.approx(bound)
        assert bad.guard_value > bound

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1.0, 80.0), st.lists(st.floats(0, 0.2), min_size=1, max_size=8),
           st.floats(10.0, 500.0))
    def test_guard_flag_matches_direct_integral(self, length, levels, l_fail):
        path = straight(length)
        dur = path.duration
        rate = lambda t: levels[min(int(t / dur * len(levels)), len(levels) - 1)]
        sw = sweep_for(path, rate)
        a = make_search(path, sw, l_fail=l_fail)
        t1 = 1 / (0.5 / length + 0.5 / l_fail)
        # left-continuous piecewise integral, evaluated sample by sample
        edges = np.append(sw.times, max(t1, sw.times[-1]))
        seg = np.clip(np.minimum(edges[1:], t1) - edges[:-1], 0, None)
        integral = float(np.sum(sw.rates * seg))
        ok = 1 - math.exp(-integral) <= math.exp(-length / (l_fail + length))
        assert a.valid == ok

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 0.1), min_size=5, max_size=5), st.integers(0, 4), st.floats(0, 0.1))
    def test_more_rate_never_lowers_success_rate(self, levels, k, extra):
        t = np.arange(5.0)
        lo = Sweep(t, np.array(levels))
        hi_rates = np.array(levels)
        hi_rates[k] += extra
        assert path_success_rate(Sweep(t, hi_rates), 0.9) >= path_success_rate(lo, 0.9)

    def test_sweep_on_grid(self):
        g = grid_with_disc_rate(0.05)
        path = PathGeometry.from_points([(0.5, 5.5), (10.5, 5.5)])
        a = make_search(path, sweep_rates(path, g))
        assert a.rate_at(10.0) == pytest.approx(0.05)  # passing the disc center
        assert a.rate_at(0.0) == 0.0


class TestReturnHome:
    def test_zero_rate_example(self):
        path = straight(20.0)
        a = make_return_home(path, sweep_for(path, lambda t: 0.0))
        assert a.kind is ActionKind.HOME
        assert a.success_rate == 0 and a.deadline == pytest.approx(40.0)
        assert a.nav_fail_rate == pytest.approx(0.005)
        assert a.p_fail(30.0) == pytest.approx(1 - math.exp(-0.15))

    def test_same_rate_as_search_but_nav_only_failure(self):
        path = straight(50.0)
        sw = sweep_for(path, lambda t: 0.001)
        s, h = make_search(path, sw), make_return_home(path, sw)
        assert s.success_rate == h.success_rate
        assert h.p_fail(90.0) == pytest.approx(1 - math.exp(-0.005 * 90))
        assert s.p_fail(90.0) != h.p_fail(90.0)

    def test_no_failure_without_nav_risk(self):
        path = straight(20.0)
        h = make_return_home(path, sweep_for(path, lambda t: 0.0), l_fail=1e12)
        assert h.p_fail(39.0) < 1e-9

    def test_stationary_home_is_degenerate(self):
        h = make_return_home(PathGeometry.stationary((1.0, 1.0)))
        assert h.degenerate and h.deadline == 0.0


def test_serialization_round_trip():
    path = straight(10.0)
    a = make_search(path, sweep_for(path, lambda t: 0.01 * t), place_refs=(2, 5))
    from psbt.actions import StochasticAction
    b = StochasticAction.from_dict(a.to_dict())
    assert b.label == "S2→5"
    assert b.to_dict() == a.to_dict()
    assert np.allclose(b.p_success(np.arange(0, 30.0)), a.p_success(np.arange(0, 30.0)))
