"""Seeded Monte Carlo simulation of the wealth SDE under linear feedback.

Dynamics: dX = (r X + pi' sigma theta) ds + pi' sigma dW with
pi = (sigma')^{-1} k X, i.e. dX/X = (r + k' theta) ds + k' dW.  Two schemes:

ExactLog      X_{i+1} = X_i exp[(r + k'theta - |k|^2/2) dt + k' dW]
EulerMaruyama X_{i+1} = X_i (1 + (r + k'theta) dt + k' dW)

Coefficients are frozen at each step's midpoint (the step average, for
piecewise-linear curves), which makes each step exactly lognormal (ExactLog),
reproduces x0 e^{int r} exactly for the zero gain, and keeps the discrete
change of measure exact: with weights exp(-sum theta'dW - 1/2 sum |theta|^2 dt)
the discounted weighted terminal wealth has expectation x0 for any bounded
gain.  Under the
RiskNeutral measure the theta drift is dropped (increments are Q-Brownian)
and the stored weight is identically 1.

Determinism: all normals come from a counter-based Philox generator keyed by
(seed, stream); the (path, step, component) -> counter layout is fixed by a
single row-major draw, so results are bit-identical across runs and
independent of any worker configuration.  Antithetic pairing negates odd
paths: pairwise-averaged increments are exactly zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .coeffs import FeedbackControl
from .errors import (
    ConfigError,
    MissingIncrements,
    NonFiniteState,
    PreconditionViolated,
    RangeError,
)
from .market import Curve, MarketModel


class Scheme(enum.Enum):
    EXACT_LOG = "exact"
    EULER_MARUYAMA = "euler"


class Measure(enum.Enum):
    PHYSICAL = "physical"
    RISK_NEUTRAL = "risk_neutral"


@dataclass(frozen=True)
class SimulationConfig:
    n_paths: int = 10_000
    n_steps: int = 256
    seed: int = 0
    scheme: Scheme = Scheme.EXACT_LOG
    measure: Measure = Measure.PHYSICAL
    antithetic: bool = False
    retain_increments: bool = True  # required by girsanov_weights
    workers: int = 1  # layout knob only; results are worker-independent

    def __post_init__(self):
        if self.n_paths < 2:
            raise ConfigError("n_paths must be >= 2")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        if self.antithetic and self.n_paths % 2:
            raise ConfigError("antithetic pairing needs an even n_paths")


@dataclass(frozen=True)
class PathEnsemble:
    times: np.ndarray  # (m+1,)
    wealth: np.ndarray  # (n_paths, m+1)
    brownian_increments: Optional[np.ndarray]  # (n_paths, m, d) or None
    girsanov_weight: np.ndarray  # (n_paths,), identically 1 under Q
    measure: Measure

    @property
    def n_paths(self) -> int:
        return self.wealth.shape[0]

    def terminal_summary(self) -> dict:
        x_T = self.wealth[:, -1]
        qs = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99]
        return {
            "n_paths": int(self.n_paths),
            "mean": float(np.mean(x_T)),
            "stderr": float(np.std(x_T, ddof=1) / np.sqrt(x_T.size)),
            "quantiles": {str(q): float(np.quantile(x_T, q)) for q in qs},
        }


def normal_increments(
    seed: int, stream: int, n_paths: int, n_steps: int, dim: int, antithetic: bool
) -> np.ndarray:
    """Standard normals keyed by (seed, stream), shape (n_paths, n_steps, dim)."""
    key = np.array([np.uint64(seed & (2**64 - 1)), np.uint64(stream)], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    if antithetic:
        half = rng.standard_normal((n_paths // 2, n_steps, dim))
        out = np.empty((n_paths, n_steps, dim))
        out[0::2] = half
        out[1::2] = -half
        return out
    return rng.standard_normal((n_paths, n_steps, dim))


def _mid_values(curve: Curve, times: np.ndarray) -> np.ndarray:
    return np.atleast_1d(curve(0.5 * (times[:-1] + times[1:])))


def simulate_gain_paths(
    times: np.ndarray,
    base_rate: np.ndarray,  # (m,) per-step drift rate (r or r - c)
    gain: np.ndarray,  # (m, d) per-step gain k
    theta: np.ndarray,  # (m, d) per-step market price of risk
    x0: float,
    dW: np.ndarray,  # (n_paths, m, d) Brownian increments of the sim measure
    scheme: Scheme,
    measure: Measure,
) -> np.ndarray:
    """Paths of the linear-gain SDE dX/X = (rate + k'theta 1_P) ds + k' dW.

    Under RiskNeutral the theta drift is absent because dW is Q-Brownian.
    """
    dt = np.diff(times)
    kth = np.einsum("ij,ij->i", gain, theta)
    drift = base_rate + (kth if measure is Measure.PHYSICAL else 0.0)
    shock = np.einsum("pmd,md->pm", dW, gain)
    with np.errstate(over="ignore", invalid="ignore"):
        if scheme is Scheme.EXACT_LOG:
            log_steps = (drift - 0.5 * np.einsum("ij,ij->i", gain, gain)) * dt + shock
            log_path = np.concatenate(
                [np.zeros((dW.shape[0], 1)), np.cumsum(log_steps, axis=1)], axis=1
            )
            wealth = x0 * np.exp(log_path)
        else:
            factors = 1.0 + drift * dt + shock
            wealth = x0 * np.concatenate(
                [np.ones((dW.shape[0], 1)), np.cumprod(factors, axis=1)], axis=1
            )
    if not np.all(np.isfinite(wealth)):
        raise NonFiniteState("simulation produced non-finite wealth")
    return wealth


def _weights_from_increments(theta_step, dt, dW) -> np.ndarray:
    """Stochastic exponential E(-int theta dW) at T, per path."""
    log_w = -np.einsum("pmd,md->p", dW, theta_step) - 0.5 * float(
        np.sum(np.einsum("ij,ij->i", theta_step, theta_step) * dt)
    )
    return np.exp(log_w)


def simulate_wealth(
    market: MarketModel,
    control: FeedbackControl,
    x0: float,
    cfg: SimulationConfig,
    t0: float = 0.0,
    t1: Optional[float] = None,
    extra_times: tuple = (),
    stream: int = 0,
) -> PathEnsemble:
    """Simulate the wealth SDE from (t0, x0) to t1 (default the horizon)."""
    if not np.isfinite(x0):
        raise RangeError("x0 must be finite")
    t1 = market.horizon if t1 is None else t1
    if not (0.0 <= t0 < t1 <= market.horizon + 1e-12):
        raise RangeError(f"need 0 <= t0 < t1 <= T, got [{t0}, {t1}]")
    times = np.union1d(np.linspace(t0, t1, cfg.n_steps + 1), np.asarray(extra_times))
    times = times[(times >= t0 - 1e-15) & (times <= t1 + 1e-15)]
    m = times.size - 1
    dt = np.diff(times)

    dW = normal_increments(cfg.seed, stream, cfg.n_paths, m, market.dim, cfg.antithetic)
    dW = dW * np.sqrt(dt)[None, :, None]

    mids = 0.5 * (times[:-1] + times[1:])
    theta_mid = np.atleast_2d(market.theta(mids))
    gain_mid = np.atleast_2d(control.gain(mids))
    r_mid = np.atleast_1d(market.r(mids))

    wealth = simulate_gain_paths(
        times, r_mid, gain_mid, theta_mid, x0, dW, cfg.scheme, cfg.measure
    )
    if cfg.measure is Measure.PHYSICAL:
        weights = _weights_from_increments(theta_mid, dt, dW)
    else:
        weights = np.ones(cfg.n_paths)
    return PathEnsemble(
        times=times,
        wealth=wealth,
        brownian_increments=dW if cfg.retain_increments else None,
        girsanov_weight=weights,
        measure=cfg.measure,
    )


def girsanov_weights(ensemble: PathEnsemble, market: MarketModel) -> np.ndarray:
    """Per-path dQ/dP weights exp(-sum theta'dW - 1/2 sum |theta|^2 dt)."""
    if ensemble.brownian_increments is None:
        raise MissingIncrements("ensemble was generated without retained increments")
    if ensemble.measure is not Measure.PHYSICAL:
        raise PreconditionViolated("weights are defined for Physical-measure ensembles")
    theta_mid = _mid_values(market.theta, ensemble.times)
    return _weights_from_increments(
        np.atleast_2d(theta_mid), np.diff(ensemble.times), ensemble.brownian_increments
    )


def conditional_target_error(
    market: MarketModel,
    control: FeedbackControl,
    x0: float,
    t: float,
    cfg: SimulationConfig,
    inner_paths: int = 1000,
    n_states: int = 32,
) -> dict:
    """Moving-target error E_t[X_T] vs X_t e^{int_t^T mu} at time t.

    Restarts an inner ensemble (common random numbers across restart states)
    from states sampled by an outer simulation to t, and reports the mean
    absolute relative error with its standard error.  The analytic multiplier
    exp(int_t^T (r + k'theta)) is reported alongside; for linear feedback the
    relative error is state-independent, so the restart states share one
    stderr (common random numbers make them perfectly correlated).
    """
    T = market.horizon
    if not (0.0 <= t < T):
        raise RangeError(f"need 0 <= t < T, got t={t}")

    grid = market.grid
    kth = np.einsum("ij,ij->i", control.gain.values, np.atleast_2d(market.theta(grid)))
    growth = Curve(grid, market.r.values + kth)
    m_analytic = float(np.exp(growth.integrate(t, T)))
    m_target = float(np.exp(market.mu.integrate(t, T)))
    analytic_error = abs(m_analytic / m_target - 1.0)

    if t > 0.0:
        outer = simulate_wealth(market, control, x0, cfg, t0=0.0, t1=t, stream=1)
        states = outer.wealth[:: max(1, cfg.n_paths // n_states), -1][:n_states]
    else:
        states = np.array([float(x0)])

    inner_cfg = replace(cfg, n_paths=inner_paths, retain_increments=False)
    inner = simulate_wealth(market, control, 1.0, inner_cfg, t0=t, t1=T, stream=2)
    factors = inner.wealth[:, -1]  # growth factors X_T / X_t, state-free

    rel = factors / m_target - 1.0
    est_mean = float(np.mean(rel))
    est_stderr = float(np.std(rel, ddof=1) / np.sqrt(rel.size))
    return {
        "t": float(t),
        "n_states": int(states.size),
        "estimate": abs(est_mean),
        "signed_estimate": est_mean,
        "stderr": est_stderr,
        "analytic_multiplier": m_analytic,
        "target_multiplier": m_target,
        "analytic_error": analytic_error,
        "states_mean": float(np.mean(states)),
    }
