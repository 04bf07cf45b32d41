import math

import numpy as np
import pytest
import scipy.sparse as sp

from emtsim.solver import (DaeProblem, InconsistentInitialConditions, SolverConfig, SolverError,
                           StateEvent, TimeEvent, backward_euler_step, column_groups, consistent_xdot,
                           fd_jacobian, simulate)


def _decay(t, x, xd):
    return xd + x


def _bdf(tol=1e-6, **kw):
    return SolverConfig(scheme="bdf", rel_tol=tol, abs_tol=tol, dt_max=kw.pop("dt_max", 0.1), **kw)


def test_bdf_exponential_decay():
    res = simulate(DaeProblem(_decay, np.ones(1)), _bdf(1e-6), 0.0, np.ones(1), -np.ones(1), 1.0)
    assert res.t == 1.0
    assert abs(res.x[0] - math.exp(-1.0)) <= 1e-5
    assert res.stats.steps < 400
    assert max(res.stats.step_order) > 1


def test_backward_euler_rl_step():
    # L di/dt + R i = V, tau = 0.2 s
    r_, l_, v = 1.0, 0.2, 1.0
    cfg = SolverConfig(scheme="backward_euler", dt_fixed=1e-3)
    ts, xs = [0.0], [0.0]

    def obs(ta, tb, interp):
        ts.append(tb)
        xs.append(interp(tb)[0][0])
    res = simulate(DaeProblem(lambda t, x, xd: l_ * xd + r_ * x - v, np.ones(1)), cfg, 0.0,
                   np.zeros(1), np.array([v / l_]), 1.0, observer=obs)
    exact = v / r_ * (1.0 - np.exp(-np.array(ts) * r_ / l_))
    assert res.stats.steps == 1000
    assert np.max(np.abs(np.array(xs) - exact)) <= 0.002 * v / r_


def test_backward_euler_is_first_order():
    errs = []
    for h in (2e-3, 1e-3, 5e-4):
        res = simulate(DaeProblem(_decay, np.ones(1)), SolverConfig(scheme="backward_euler", dt_fixed=h),
                       0.0, np.ones(1), -np.ones(1), 1.0)
        errs.append(abs(res.x[0] - math.exp(-1)))
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)


def test_bdf_lc_oscillator_tracks_analytic_solution():
    w = 2 * math.pi * 50

    def lc(t, x, xd):
        return np.array([xd[0] - w * x[1], xd[1] + w * x[0]])
    res = simulate(DaeProblem(lc, np.ones(2)), _bdf(1e-7, dt_max=1e-3), 0.0, np.array([1.0, 0.0]),
                   np.array([0.0, -w]), 0.1)
    assert res.x[0] == pytest.approx(math.cos(w * 0.1), abs=1e-4)
    assert res.x[1] == pytest.approx(-math.sin(w * 0.1), abs=1e-4)


def test_bdf_stiff_system_takes_large_steps():
    lam = np.array([-1.0, -1e6])

    def f(t, x, xd):
        return xd - lam * x
    x0 = np.array([1.0, 1.0])
    res = simulate(DaeProblem(f, np.ones(2)), _bdf(1e-5, dt_max=0.5), 0.0, x0, lam * x0, 2.0)
    assert res.x[0] == pytest.approx(math.exp(-2.0), rel=1e-3)
    assert abs(res.x[1]) < 1e-6
    assert res.stats.steps < 300


def test_fd_jacobian_call_count_and_accuracy():
    calls = [0]
    a = np.array([[-2.0, 1.0, 0.0], [0.5, -3.0, 0.2], [0.0, 1.0, -1.0]])

    def f(t, x, xd):
        calls[0] += 1
        return xd - a @ x + 0.1 * x ** 3
    x = np.array([0.3, -0.2, 0.5])
    xd = np.zeros(3)
    jac = fd_jacobian(f, 0.0, x, xd, cj=10.0)
    assert calls[0] == 4
    exact = 10.0 * np.eye(3) - a + np.diag(0.3 * x ** 2)
    assert np.allclose(jac, exact, rtol=1e-6, atol=1e-6)


def test_grouped_jacobian_matches_dense_on_banded_problem():
    n = 30

    def f(t, x, xd):
        r = xd + 2 * x - np.sin(x)
        r[1:] -= x[:-1] ** 2
        r[:-1] -= 0.5 * x[1:]
        return r
    pat = sp.diags([1, 1, 1], [-1, 0, 1], shape=(n, n)).tocsr().astype(bool)
    groups = column_groups(pat)
    assert len(groups) == 3
    for cols, _ in groups:
        # columns in a group never share a row
        assert pat[:, cols].sum(axis=1).max() <= 1
    rng = np.random.default_rng(1)
    x, xd = rng.normal(size=n), rng.normal(size=n)
    dense = fd_jacobian(f, 0.0, x, xd, 5.0)
    calls = [0]

    def counted(t, x, xd):
        calls[0] += 1
        return f(t, x, xd)
    grouped = fd_jacobian(counted, 0.0, x, xd, 5.0, groups=groups)
    assert calls[0] == 4
    assert np.allclose(dense, grouped, rtol=1e-12, atol=1e-12)


def test_consistent_xdot_solves_for_derivative():
    def f(t, x, xd):
        return np.array([2.0 * xd[0] + x[0] - 1.0, xd[1] - x[0] * x[1]])
    x = np.array([0.5, 2.0])
    xd = consistent_xdot(f, 0.0, x, np.zeros(2), np.ones(2))
    assert np.allclose(xd, [0.25, 1.0])


def test_inconsistent_start_rejected():
    with pytest.raises(InconsistentInitialConditions):
        simulate(DaeProblem(_decay, np.ones(1)), _bdf(), 0.0, np.ones(1), np.zeros(1), 1.0)


def test_time_events_land_on_step_boundaries():
    hits = []
    seen = []

    def obs(ta, tb, interp):
        seen.append(tb)
    events = [TimeEvent(t, lambda t, x: hits.append(t), "tick") for t in (0.1234567, 0.5, 0.77)]
    for cfg in (_bdf(1e-6), SolverConfig(scheme="backward_euler", dt_fixed=1e-3)):
        hits.clear()
        seen.clear()
        res = simulate(DaeProblem(_decay, np.ones(1)), cfg, 0.0, np.ones(1), -np.ones(1), 1.0,
                       time_events=events, observer=obs)
        assert hits == [0.1234567, 0.5, 0.77]
        for t in hits:
            assert t in seen
        assert res.stats.restarts == 3


def test_state_event_located_within_tolerance():
    # falling mass: x' = v, v' = -g, bounce when x < 0
    g = 9.81

    def f(t, x, xd):
        return np.array([xd[0] - x[1], xd[1] + g])
    bounces = []

    def bounce(t, x):
        bounces.append(t)
        x[0] = abs(x[0])
        x[1] = -0.8 * x[1]
    ev = StateEvent(lambda t, x: x[0] < 0.0, bounce, "bounce")
    cfg = _bdf(1e-8, dt_max=0.01, event_tolerance=1e-7)
    simulate(DaeProblem(f, np.ones(2)), cfg, 0.0, np.array([1.0, 0.0]), np.array([0.0, -g]), 0.6,
             state_events=[ev])
    assert len(bounces) == 1
    assert bounces[0] == pytest.approx(math.sqrt(2.0 / g), abs=2e-7)


def test_stats_identities():
    res = simulate(DaeProblem(_decay, np.ones(1)), _bdf(1e-6), 0.0, np.ones(1), -np.ones(1), 1.0)
    st = res.stats
    assert st.steps == len(st.step_t)
    assert st.dt_min_observed == min(st.step_h)
    assert st.dt_max_observed == max(st.step_h)
    assert st.jacobian_evaluations == st.jacobian_factorizations
    assert st.residual_calls >= st.newton_iterations + 2 * st.jacobian_evaluations
    assert 0 < st.jacobian_time <= st.wall_time


def test_newton_failure_raises_solver_error():
    def f(t, x, xd):
        return xd - np.where(t > 0.5, np.nan, -x)
    with pytest.raises(SolverError):
        simulate(DaeProblem(f, np.ones(1)), _bdf(1e-6), 0.0, np.ones(1), -np.ones(1), 1.0)


def test_standalone_backward_euler_step():
    y = backward_euler_step(_decay, 0.0, np.ones(1), 0.1)
    assert y[0] == pytest.approx(1.0 / 1.1)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(scheme="rk4").validate()
    with pytest.raises(ValueError):
        SolverConfig(dt_min=1.0, dt_max=0.1).validate()
    with pytest.raises(ValueError):
        SolverConfig(max_order=6).validate()
