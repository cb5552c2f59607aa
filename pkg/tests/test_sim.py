"""Wealth-SDE simulation: schemes, determinism, measure change."""

import numpy as np
import pytest

from movetarget import (
    Curve,
    FeedbackControl,
    Measure,
    Scheme,
    SimulationConfig,
    Utility,
    conditional_target_error,
    feedback_control,
    girsanov_weights,
    particular_solution_cubic,
    simulate_wealth,
)
from movetarget.errors import MissingIncrements, RangeError
from tests.conftest import constant_market


def _zero_control(market):
    return FeedbackControl.zero(market, Utility.QUADRATIC)


def _const_gain_control(market, k):
    n = market.grid.size
    return FeedbackControl(
        gain=Curve(market.grid, np.full((n, market.dim), k)),
        utility=Utility.QUADRATIC,
        scale_exponent=Curve(market.grid, np.zeros(n)),
    )


def test_zero_gain_deterministic_growth(trivial_market):
    cfg = SimulationConfig(n_paths=16, n_steps=32, seed=1)
    ens = simulate_wealth(trivial_market, _zero_control(trivial_market), 2.0, cfg)
    want = 2.0 * np.exp(trivial_market.r.integrate(0.0, 1.0))
    assert np.allclose(ens.wealth[:, -1], want, rtol=1e-13)
    assert np.all(ens.wealth[:, 0] == 2.0)


def test_zero_gain_exact_for_time_varying_r():
    # midpoint freezing integrates piecewise-linear r exactly per step
    from movetarget import build_market

    grid = np.linspace(0.0, 1.0, 9)
    r = 0.02 + 0.03 * grid
    m = build_market(
        {"dim": 1, "horizon": 1.0, "grid": grid.tolist(),
         "r": {"grid": grid.tolist(), "values": r.tolist()},
         "mu_x": 0.05, "sigma": 0.2, "mu": 0.02}
    )
    cfg = SimulationConfig(n_paths=4, n_steps=8, seed=1)
    ens = simulate_wealth(m, FeedbackControl.zero(m, Utility.QUADRATIC), 1.0, cfg)
    want = np.exp(m.r.integrate(0.0, 1.0))
    assert np.allclose(ens.wealth[:, -1], want, rtol=1e-14)


def test_determinism_bit_identical(trivial_market):
    ctrl = _const_gain_control(trivial_market, 0.3)
    for workers in (1, 4):
        cfg = SimulationConfig(n_paths=64, n_steps=16, seed=99, workers=workers)
        ens = simulate_wealth(trivial_market, ctrl, 1.0, cfg)
        if workers == 1:
            ref = ens
    assert np.array_equal(ref.wealth, ens.wealth)
    assert np.array_equal(ref.brownian_increments, ens.brownian_increments)


def test_antithetic_pairing(trivial_market):
    cfg = SimulationConfig(n_paths=64, n_steps=8, seed=3, antithetic=True)
    ens = simulate_wealth(trivial_market, _zero_control(trivial_market), 1.0, cfg)
    dW = ens.brownian_increments
    assert np.max(np.abs(dW[0::2] + dW[1::2])) == 0.0


def test_exact_log_positivity(trivial_market):
    ctrl = _const_gain_control(trivial_market, 0.8)
    cfg = SimulationConfig(n_paths=2000, n_steps=64, seed=8)
    ens = simulate_wealth(trivial_market, ctrl, 0.5, cfg)
    assert np.min(ens.wealth) > 0.0


def test_scheme_cross_check(cubic_market):
    curves = particular_solution_cubic(cubic_market)
    ctrl = feedback_control(curves, cubic_market)
    out = {}
    for scheme in (Scheme.EXACT_LOG, Scheme.EULER_MARUYAMA):
        cfg = SimulationConfig(n_paths=40_000, n_steps=256, seed=21, scheme=scheme)
        ens = simulate_wealth(cubic_market, ctrl, 1.0, cfg)
        x = ens.wealth[:, -1]
        out[scheme] = (np.mean(x), np.std(x, ddof=1) / np.sqrt(x.size))
    gap = abs(out[Scheme.EXACT_LOG][0] - out[Scheme.EULER_MARUYAMA][0])
    combined = np.hypot(out[Scheme.EXACT_LOG][1], out[Scheme.EULER_MARUYAMA][1])
    assert gap <= 3.0 * combined


def test_girsanov_weights_theta_zero():
    m = constant_market(r=0.05, theta=0.0, mu=0.05)
    cfg = SimulationConfig(n_paths=128, n_steps=16, seed=5)
    ens = simulate_wealth(m, _zero_control(m), 1.0, cfg)
    assert np.all(girsanov_weights(ens, m) == 1.0)


def test_girsanov_weights_mean_one(trivial_market):
    cfg = SimulationConfig(n_paths=100_000, n_steps=64, seed=17)
    ens = simulate_wealth(trivial_market, _zero_control(trivial_market), 1.0, cfg)
    w = girsanov_weights(ens, trivial_market)
    stderr = np.std(w, ddof=1) / np.sqrt(w.size)
    assert abs(np.mean(w) - 1.0) <= 3.0 * stderr
    assert np.allclose(w, ens.girsanov_weight)


def test_risk_neutral_pricing_identity(trivial_market):
    # discounted weighted terminal wealth equals x0 for a bounded gain
    ctrl = _const_gain_control(trivial_market, 0.4)
    cfg = SimulationConfig(n_paths=100_000, n_steps=64, seed=23)
    x0 = 1.7
    ens = simulate_wealth(trivial_market, ctrl, x0, cfg)
    w = girsanov_weights(ens, trivial_market)
    disc = np.exp(-trivial_market.r.integrate(0.0, 1.0))
    sample = w * ens.wealth[:, -1] * disc
    stderr = np.std(sample, ddof=1) / np.sqrt(sample.size)
    assert abs(np.mean(sample) - x0) <= 3.0 * stderr


def test_q_measure_martingale(trivial_market):
    # under Q the discounted wealth is a martingale: zero-drift sample mean
    ctrl = _const_gain_control(trivial_market, 0.5)
    cfg = SimulationConfig(
        n_paths=100_000, n_steps=32, seed=29, measure=Measure.RISK_NEUTRAL
    )
    ens = simulate_wealth(trivial_market, ctrl, 1.0, cfg)
    assert np.all(ens.girsanov_weight == 1.0)
    disc = np.exp(-np.array([trivial_market.r.integrate(0.0, s) for s in ens.times]))
    discounted = ens.wealth * disc[None, :]
    drift = discounted[:, -1] - discounted[:, 0]
    stderr = np.std(drift, ddof=1) / np.sqrt(drift.shape[0])
    assert abs(np.mean(drift)) <= 3.0 * stderr


def test_non_finite_state(trivial_market):
    from movetarget.errors import NonFiniteState

    ctrl = _const_gain_control(trivial_market, 1e200)
    cfg = SimulationConfig(n_paths=8, n_steps=4, seed=1, scheme=Scheme.EULER_MARUYAMA)
    with pytest.raises(NonFiniteState):
        simulate_wealth(trivial_market, ctrl, 1.0, cfg)


def test_missing_increments(trivial_market):
    cfg = SimulationConfig(n_paths=16, n_steps=4, seed=1, retain_increments=False)
    ens = simulate_wealth(trivial_market, _zero_control(trivial_market), 1.0, cfg)
    with pytest.raises(MissingIncrements):
        girsanov_weights(ens, trivial_market)


def test_conditional_target_zero_gain(trivial_market):
    # k == 0 and mu == r: zero analytic error and MC within noise
    cfg = SimulationConfig(n_paths=4000, n_steps=64, seed=31)
    out = conditional_target_error(
        trivial_market, _zero_control(trivial_market), 1.0, 0.5, cfg
    )
    assert out["analytic_error"] <= 1e-14
    assert abs(out["signed_estimate"]) <= 3.0 * out["stderr"] + 1e-12


def test_conditional_target_range_error(trivial_market):
    cfg = SimulationConfig(n_paths=16, n_steps=8, seed=1)
    with pytest.raises(RangeError):
        conditional_target_error(trivial_market, _zero_control(trivial_market), 1.0, 1.0, cfg)


def test_terminal_summary(trivial_market):
    cfg = SimulationConfig(n_paths=512, n_steps=8, seed=2)
    ens = simulate_wealth(trivial_market, _zero_control(trivial_market), 1.0, cfg)
    summ = ens.terminal_summary()
    assert summ["n_paths"] == 512
    assert summ["quantiles"]["0.5"] == pytest.approx(summ["mean"], rel=1e-12)
