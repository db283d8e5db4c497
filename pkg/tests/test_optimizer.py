import itertools

import numpy as np
import pytest

from epdice.optimizer import (ControlPath, OptimizeOptions, control_bounds, fd_gradient,
                              initial_controls, optimize, simulate, stationarity, welfare,
                              welfare_and_gradient)
from epdice.welfare import constant_weights, weight_path


@pytest.fixture(scope="module")
def toy(params):
    return params.replace(horizon=3, terminal_savings_periods=0)


def _rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


@pytest.mark.parametrize("theta", [0.5, 1.0, float("inf")])
def test_adjoint_matches_finite_differences(params, theta):
    p = params.replace(theta=theta)
    ctrl = initial_controls(p)
    w = weight_path(0.1, 0.02, ctrl.mu)
    _, g = welfare_and_gradient(ctrl, w, p)
    fd = fd_gradient(ctrl, w, p)
    for name in ("mu", "s", "emissions", "consumption"):
        assert _rel_err(getattr(g, name), getattr(fd, name)) <= 1e-4, name


def test_adjoint_with_dice_damages(params):
    ctrl = initial_controls(params)
    w = constant_weights(0.0, params.horizon)
    _, g = welfare_and_gradient(ctrl, w, params, damage_coef=params.damages.psi_dice)
    fd = fd_gradient(ctrl, w, params, damage_coef=params.damages.psi_dice)
    assert _rel_err(g.mu, fd.mu) <= 1e-4
    assert _rel_err(g.emissions, fd.emissions) <= 1e-4


def test_bounds(params):
    b = control_bounds(params)
    n = params.horizon
    assert b.lower[0] == b.upper[0] == params.economy.mu0
    assert b.upper[n - 1] == 0.0
    assert b.upper[params.economy.mu_late_period] == params.economy.mu_max_late
    assert np.all(b.lower[-10:] == params.economy.savings_terminal)
    pinned = control_bounds(params, mu_fixed=0.03)
    assert np.all(pinned.lower[:n] == 0.03) and np.all(pinned.upper[:n] == 0.03)


def test_toy_beats_exhaustive_grid(toy):
    w = constant_weights(0.1, 3)
    opt = optimize(initial_controls(toy), w, toy)
    assert opt.converged
    mu_grid = np.linspace(0.0, 1.0, 11)
    s_grid = np.linspace(toy.economy.savings_min, toy.economy.savings_max, 11)
    best = -np.inf
    for m1, s0, s1, s2 in itertools.product(mu_grid, s_grid, s_grid, s_grid):
        ctrl = ControlPath([toy.economy.mu0, m1, 0.0], [s0, s1, s2])
        best = max(best, welfare(ctrl, w, toy))
    assert opt.welfare >= best - 1e-6


def test_toy_fd_gradient_option_agrees(toy):
    w = constant_weights(0.1, 3)
    a = optimize(initial_controls(toy), w, toy)
    b = optimize(initial_controls(toy), w, toy, OptimizeOptions(gradient="fd"))
    assert b.welfare == pytest.approx(a.welfare, rel=1e-10)
    np.testing.assert_allclose(b.controls.s, a.controls.s, atol=1e-4)


def test_no_damages_means_no_abatement(params):
    p = params.replace(psi1=0.0, psi2=0.0)
    rep = optimize(initial_controls(p), constant_weights(0.1, p.horizon), p)
    assert rep.converged
    assert np.all(rep.controls.mu[1:] == 0.0)


def test_deterministic(params):
    w = constant_weights(0.1, params.horizon)
    a = optimize(initial_controls(params), w, params)
    b = optimize(initial_controls(params), w, params)
    assert a.welfare == b.welfare
    np.testing.assert_array_equal(a.controls.mu, b.controls.mu)
    np.testing.assert_array_equal(a.controls.s, b.controls.s)


def test_converges_with_monotone_history_and_objective_scale(params):
    w = constant_weights(0.1, params.horizon)
    a = optimize(initial_controls(params), w, params)
    assert a.converged and a.stationarity <= 1e-6
    hist = np.array(a.welfare_history)
    assert np.all(np.diff(hist) >= -1e-9 * np.abs(hist[1:]))
    # an affine rescaling of the objective leaves the optimum in place
    b = optimize(initial_controls(params), w, params, OptimizeOptions(objective_scale=1e-3))
    assert b.welfare == pytest.approx(a.welfare, rel=1e-10)
    np.testing.assert_allclose(b.controls.mu, a.controls.mu, atol=1e-4)


def test_optimum_is_stationary_under_projection(params):
    w = constant_weights(0.1, params.horizon)
    rep = optimize(initial_controls(params), w, params)
    _, g = welfare_and_gradient(rep.controls, w, params)
    b = control_bounds(params)
    x = np.concatenate([rep.controls.mu, rep.controls.s])
    assert stationarity(x, np.concatenate([g.mu, g.s]), b) <= 1e-6


def test_simulate_rejects_out_of_bounds(params):
    n = params.horizon
    with pytest.raises(ValueError):
        simulate(ControlPath(np.full(n, 1.5), np.full(n, 0.2)), np.full(n, 0.1), params)
    with pytest.raises(ValueError):
        simulate(ControlPath(np.full(n, 0.5), np.full(n, 1.0)), np.full(n, 0.1), params)
    with pytest.raises(ValueError):
        ControlPath(np.zeros(3), np.zeros(4))
