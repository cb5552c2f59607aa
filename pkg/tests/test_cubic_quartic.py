"""Backward RK4 coefficient systems: cubic and quartic utilities."""

import numpy as np
import pytest

from movetarget import (
    CoefficientCurves,
    Curve,
    Utility,
    build_market,
    equilibrium_residual,
    necessary_condition_cubic,
    particular_solution_cubic,
    solve_cubic_coeffs,
    solve_quartic_coeffs,
)
from movetarget.errors import (
    DegenerateDenominator,
    PreconditionViolated,
    ZeroTheta,
)
from tests.conftest import constant_market


def test_cubic_particular_closed_form(cubic_market):
    curves = particular_solution_cubic(cubic_market)
    assert np.all(curves.alpha.values == -0.5)
    assert curves.M.values[0] == pytest.approx(np.exp(0.03), abs=1e-14)
    assert curves.N.values[0] == pytest.approx(2 * np.exp(0.02), abs=1e-14)
    resid = equilibrium_residual(curves, cubic_market)
    assert resid.sup <= 1e-15


def test_cubic_particular_precondition():
    with pytest.raises(PreconditionViolated):
        particular_solution_cubic(constant_market(r=0.05, theta=0.2, mu=0.05))


def test_cubic_rk4_reproduces_particular(cubic_market):
    rk4 = solve_cubic_coeffs(cubic_market)
    ref = particular_solution_cubic(cubic_market)
    assert np.max(np.abs(rk4.alpha.values - ref.alpha.values)) <= 1e-8
    assert np.max(np.abs(rk4.M.values - ref.M.values)) <= 1e-8
    assert np.max(np.abs(rk4.N.values - ref.N.values)) <= 1e-8


def test_cubic_rejected_branch_residual(cubic_market):
    # alpha == -1 solves the ODE system for the same market but leaves the
    # drift residual at -|theta|^2/2, so it is not an equilibrium.
    grid = cubic_market.grid
    rhat = cubic_market.r.values - cubic_market.mu.values
    R = Curve(grid, rhat).backward_integral()
    curves = CoefficientCurves(
        utility=Utility.CUBIC,
        M=Curve(grid, np.exp(R)),
        N=Curve(grid, np.full(grid.size, 2.0)),
        Gamma=Curve(grid, np.exp(R)),
        alpha=Curve(grid, np.full(grid.size, -1.0)),
        r_hat=Curve(grid, rhat),
    )
    assert np.max(np.abs(curves.consistency_residual())) <= 1e-12
    resid = equilibrium_residual(curves, cubic_market)
    a = cubic_market.theta_sq().values
    assert np.allclose(resid.curve.values, -0.5 * a, atol=1e-14)
    assert not resid.passed


@pytest.mark.parametrize("solver,util", [
    (solve_cubic_coeffs, Utility.CUBIC),
    (solve_quartic_coeffs, Utility.QUARTIC),
])
def test_consistency_residual(solver, util):
    m = constant_market(r=0.05, theta=0.2, mu=0.04, n_steps=512)
    curves = solver(m)
    assert curves.utility is util
    assert np.max(np.abs(curves.consistency_residual())) <= 1e-9


@pytest.mark.parametrize("solver,n_base,window", [
    (solve_cubic_coeffs, 64, (12.0, 20.0)),
    (solve_quartic_coeffs, 16, (12.0, 20.0)),
])
def test_richardson_order(solver, n_base, window):
    # constant r_hat = 0.01, |theta|^2 = 0.04
    def market(n):
        return constant_market(r=0.05, theta=0.2, mu=0.04, n_steps=n)

    sols = {n: solver(market(n)) for n in (n_base, 2 * n_base, 4 * n_base)}
    fine = sols[4 * n_base]

    def err(n):
        c = sols[n]
        step = (4 * n_base) // n
        return max(
            np.max(np.abs(c.M.values - fine.M.values[::step])),
            np.max(np.abs(c.N.values - fine.N.values[::step])),
        )

    ratio = err(n_base) / err(2 * n_base)
    assert window[0] <= ratio <= window[1]


def test_flat_market_shortcut():
    m = build_market(
        {"dim": 1, "horizon": 1.0, "grid": {"n_steps": 64},
         "r": 0.03, "mu_x": 0.03, "sigma": 0.2, "mu": 0.03}
    )
    c3 = solve_cubic_coeffs(m)
    assert np.all(c3.alpha.values == 0.0)
    assert np.all(c3.M.values == 1.0) and np.all(c3.N.values == 2.0)
    c4 = solve_quartic_coeffs(m)
    assert np.all(c4.alpha.values == 0.0)
    assert np.all(c4.Phi.values == 1.0)


def test_quartic_flat_rhat_with_risk_degenerates():
    # mu == r with theta != 0: the quartic gain ratio is 0/0 on the whole
    # interval, not just at T.
    m = constant_market(r=0.05, theta=0.2, mu=0.05, n_steps=64)
    with pytest.raises(DegenerateDenominator):
        solve_quartic_coeffs(m)


def test_quartic_terminal_alpha_zero():
    # the terminal consistency relation is 0 = 0 for every alpha; the limit
    # convention resolves alpha(T) = 0 and a linear approach ~ rhat(T)/3.
    m = constant_market(r=0.05, theta=0.2, mu=0.04, n_steps=256)
    curves = solve_quartic_coeffs(m)
    assert curves.alpha.values[-1] == 0.0
    tau = m.horizon - m.grid
    rhat_T = 0.01
    near = tau <= 0.05
    assert np.max(np.abs(curves.alpha.values[near] + (rhat_T / 3.0) * tau[near])) < 1e-5


def test_necessary_condition_eta_zero():
    res = necessary_condition_cubic(constant_market(r=0.05, theta=0.2, mu=0.05))
    assert res["eta"] == pytest.approx(0.0, abs=1e-12)
    assert res["admissible"]
    assert sorted(res["roots"]) == pytest.approx([-1.5, 0.0], abs=1e-12)


def test_necessary_condition_eta_critical():
    res = necessary_condition_cubic(
        constant_market(r=0.05, theta=0.2, mu=0.05 - 9.0 / 16.0 * 0.04)
    )
    assert res["eta"] == pytest.approx(9.0 / 16.0, abs=1e-12)
    assert res["admissible"]
    assert res["roots"] == pytest.approx([-0.75], abs=1e-12)


def test_necessary_condition_eta_above():
    res = necessary_condition_cubic(constant_market(r=0.05, theta=0.2, mu=0.01))
    assert res["eta"] == pytest.approx(1.0, abs=1e-12)
    assert not res["admissible"]
    assert res["roots"] == []


def test_necessary_condition_zero_theta():
    m = build_market(
        {"dim": 1, "horizon": 1.0, "r": 0.05, "mu_x": 0.05, "sigma": 0.2, "mu": 0.03}
    )
    with pytest.raises(ZeroTheta):
        necessary_condition_cubic(m)


def test_time_varying_coefficients_consistency():
    grid = np.linspace(0.0, 1.0, 513)
    mu_x = 0.07 + 0.01 * grid
    m = build_market(
        {"dim": 1, "horizon": 1.0, "grid": grid.tolist(),
         "r": 0.03, "mu_x": {"grid": grid.tolist(), "values": mu_x.tolist()},
         "sigma": 0.2, "mu": 0.02}
    )
    for solver in (solve_cubic_coeffs, solve_quartic_coeffs):
        curves = solver(m)
        assert np.max(np.abs(curves.consistency_residual())) <= 1e-9
