"""Deterministic market data on a shared time grid.

The wealth process is dX = (r X + pi' sigma theta) ds + pi' sigma dW with
market price of risk theta = sigma^{-1} (mu_x - r 1).  All coefficient
processes are deterministic and represented as piecewise-linear curves on one
strictly increasing grid spanning [0, T]; trapezoidal quadrature is therefore
exact for the curves themselves.  The required-return curve mu defines the
moving target E_t[X_T] = X_t exp(int_t^T mu).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatch, GridError, RangeError, SingularSigma

trapezoid = getattr(np, "trapezoid", np.trapz)

DEFAULT_SIGMA_COND_BOUND = 1e8


@dataclass(frozen=True)
class Curve:
    """Piecewise-linear curve on a fixed grid.

    values has shape (n,) for scalars, (n, d) for vectors, (n, d, d) for
    matrices.  Immutable; arithmetic helpers return new curves on the same
    grid.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise GridError("grid must be 1-d with at least two points")
        if np.any(np.diff(grid) <= 0):
            raise GridError("grid must be strictly increasing")
        if grid[0] != 0.0:
            raise GridError("grid must start at 0")
        if values.shape[0] != grid.size:
            raise DimensionMismatch(
                f"values leading dim {values.shape[0]} != grid size {grid.size}"
            )
        if not np.all(np.isfinite(values)):
            raise ConfigError("curve values must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    # -- evaluation -------------------------------------------------------
    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    def __call__(self, s):
        """Piecewise-linear evaluation; s scalar or array in [0, T]."""
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < self.grid[0] - 1e-12) or np.any(s_arr > self.grid[-1] + 1e-12):
            raise RangeError(f"evaluation outside [0, {self.horizon}]")
        s_arr = np.clip(s_arr, self.grid[0], self.grid[-1])
        idx = np.clip(np.searchsorted(self.grid, s_arr, side="right") - 1, 0, self.grid.size - 2)
        h = self.grid[idx + 1] - self.grid[idx]
        w = (s_arr - self.grid[idx]) / h
        w = w.reshape(w.shape + (1,) * (self.values.ndim - 1))
        return (1.0 - w) * self.values[idx] + w * self.values[idx + 1]

    # -- calculus ---------------------------------------------------------
    def integrate(self, a: float, b: float) -> float:
        """Exact integral of the piecewise-linear curve over [a, b] (scalar curves)."""
        if self.values.ndim != 1:
            raise DimensionMismatch("integrate is defined for scalar curves")
        if a > b:
            raise RangeError(f"integrate needs a <= b, got a={a}, b={b}")
        if a < self.grid[0] - 1e-12 or b > self.grid[-1] + 1e-12:
            raise RangeError(f"[{a}, {b}] outside [0, {self.horizon}]")
        if a == b:
            return 0.0
        pts = self.grid[(self.grid > a) & (self.grid < b)]
        xs = np.concatenate(([a], pts, [b]))
        ys = self(xs)
        return float(trapezoid(ys, xs))

    def backward_integral(self) -> np.ndarray:
        """R_i = int_{s_i}^{T} f ds at every grid node (scalar curves)."""
        areas = 0.5 * (self.values[1:] + self.values[:-1]) * np.diff(self.grid)
        out = np.zeros_like(self.values)
        out[:-1] = np.cumsum(areas[::-1])[::-1]
        return out

    def derivative_values(self) -> np.ndarray:
        """Node derivatives: second-order interior/one-sided differences."""
        return np.gradient(self.values, self.grid, edge_order=2, axis=0)

    # -- construction helpers ----------------------------------------------
    def with_values(self, values) -> "Curve":
        return Curve(self.grid, np.asarray(values, dtype=float))

    def resample(self, grid: np.ndarray) -> "Curve":
        return Curve(grid, self(np.asarray(grid, dtype=float)))

    @staticmethod
    def constant(value, horizon: float) -> "Curve":
        v = np.asarray(value, dtype=float)
        return Curve(np.array([0.0, horizon]), np.stack([v, v]))


def integrate(curve: Curve, a: float, b: float) -> float:
    """Module-level alias for Curve.integrate."""
    return curve.integrate(a, b)


@dataclass(frozen=True)
class MarketModel:
    """Market coefficients on a shared grid, with derived theta.

    Invariants: sigma invertible at every node (condition number below
    cond_bound) and sigma theta + r 1 = mu_x at every node.
    """

    dim: int
    horizon: float
    r: Curve
    mu_x: Curve
    sigma: Curve
    theta: Curve
    mu: Curve
    cond_bound: float = field(default=DEFAULT_SIGMA_COND_BOUND)

    @property
    def grid(self) -> np.ndarray:
        return self.r.grid

    def theta_sq(self) -> Curve:
        """|theta|^2 as a scalar curve (nodewise; PL between nodes)."""
        return Curve(self.grid, np.einsum("ij,ij->i", self.theta.values, self.theta.values))

    def sigma_inv_T(self, s) -> np.ndarray:
        """(sigma(s)')^{-1}, used by feedback policies pi = (sigma')^{-1} k x."""
        return np.linalg.inv(np.swapaxes(self.sigma(s), -1, -2))


# ---------------------------------------------------------------------------
# construction from raw config
# ---------------------------------------------------------------------------

def _as_time_series(entry, grid, horizon):
    """Resolve a config entry (constant or {grid, values}) on the master grid.

    Returns an array of shape (n, ...) where ... is the entry's own shape.
    """
    if isinstance(entry, dict):
        if "grid" not in entry or "values" not in entry:
            raise ConfigError("curve entries need 'grid' and 'values'")
        own = np.asarray(entry["grid"], dtype=float)
        vals = np.asarray(entry["values"], dtype=float)
        if own.ndim != 1 or vals.shape[0] != own.size:
            raise GridError("curve grid/values shape mismatch")
        if abs(own[0]) > 1e-12 or abs(own[-1] - horizon) > 1e-9:
            raise GridError("curve grid must span [0, horizon]")
        c = Curve(own, vals)
        return c(grid)
    v = np.asarray(entry, dtype=float)
    return np.broadcast_to(v, (grid.size,) + v.shape).copy()


def _expand_sigma(raw, d):
    """Accept scalar -> s*I, d-vector -> diag, or full d x d per node."""
    raw = np.asarray(raw, dtype=float)
    n = raw.shape[0]
    if raw.ndim == 1:  # scalar per node
        return raw[:, None, None] * np.eye(d)
    if raw.ndim == 2:
        if raw.shape[1] == d:
            out = np.zeros((n, d, d))
            idx = np.arange(d)
            out[:, idx, idx] = raw
            return out
        raise DimensionMismatch(f"sigma vector length {raw.shape[1]} != dim {d}")
    if raw.ndim == 3 and raw.shape[1:] == (d, d):
        return raw
    raise DimensionMismatch(f"sigma shape {raw.shape} incompatible with dim {d}")


def build_market(config: dict) -> MarketModel:
    """Build a MarketModel from a raw description.

    config fields: dim, horizon, grid (array or {"n_steps": m}), r, mu_x,
    sigma, mu.  Each coefficient is a constant (expanded flat) or a
    {grid, values} table; everything is resampled onto the master grid.
    """
    try:
        d = int(config["dim"])
        horizon = float(config["horizon"])
    except KeyError as exc:
        raise ConfigError(f"missing config field: {exc}") from exc
    if d < 1:
        raise ConfigError(f"dim must be >= 1, got {d}")
    if horizon <= 0:
        raise ConfigError(f"horizon must be positive, got {horizon}")

    raw_grid = config.get("grid", {"n_steps": 256})
    if isinstance(raw_grid, dict):
        n_steps = int(raw_grid.get("n_steps", 256))
        if n_steps < 1:
            raise GridError("n_steps must be >= 1")
        grid = np.linspace(0.0, horizon, n_steps + 1)
    else:
        grid = np.asarray(raw_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise GridError("grid must have at least two points")
        if np.any(np.diff(grid) <= 0):
            raise GridError("grid must be strictly increasing")
        if abs(grid[0]) > 1e-12 or abs(grid[-1] - horizon) > 1e-9:
            raise GridError("grid must span [0, horizon]")
        grid = grid.copy()
        grid[0], grid[-1] = 0.0, horizon

    missing = [k for k in ("r", "mu_x", "sigma", "mu") if k not in config]
    if missing:
        raise ConfigError(f"missing config fields: {missing}")

    r_vals = _as_time_series(config["r"], grid, horizon)
    mu_vals = _as_time_series(config["mu"], grid, horizon)
    if r_vals.ndim != 1 or mu_vals.ndim != 1:
        raise DimensionMismatch("r and mu must be scalar curves")

    mux_vals = _as_time_series(config["mu_x"], grid, horizon)
    if mux_vals.ndim == 1:
        mux_vals = np.repeat(mux_vals[:, None], d, axis=1)
    if mux_vals.shape != (grid.size, d):
        raise DimensionMismatch(f"mu_x shape {mux_vals.shape} != ({grid.size}, {d})")

    sig_vals = _expand_sigma(_as_time_series(config["sigma"], grid, horizon), d)

    cond_bound = float(config.get("sigma_cond_bound", DEFAULT_SIGMA_COND_BOUND))
    conds = np.linalg.cond(sig_vals)
    if not np.all(np.isfinite(conds)) or np.any(conds > cond_bound):
        worst = int(np.argmax(np.where(np.isfinite(conds), conds, np.inf)))
        raise SingularSigma(
            f"sigma at s={grid[worst]:g} has condition number "
            f"{conds[worst]:.3g} (bound {cond_bound:.3g})"
        )

    excess = mux_vals - r_vals[:, None]
    theta_vals = np.linalg.solve(sig_vals, excess[..., None])[..., 0]

    return MarketModel(
        dim=d,
        horizon=horizon,
        r=Curve(grid, r_vals),
        mu_x=Curve(grid, mux_vals),
        sigma=Curve(grid, sig_vals),
        theta=Curve(grid, theta_vals),
        mu=Curve(grid, mu_vals),
        cond_bound=cond_bound,
    )
