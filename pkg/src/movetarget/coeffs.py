"""Deterministic coefficient systems behind the equilibrium feedback gains.

All four utilities reduce, after the transformation Y = X e^{int_s^T c du}
(c = lambda for the quadratic problem, c = mu for the cubic/quartic ones), to
a family of problems whose candidate equilibrium is linear in the state:
u*_s = k_s Y_s with a deterministic gain curve.  This module solves for the
deterministic coefficient curves defining those gains:

quadratic (multiplier lambda, r_hat = r - lambda):
    Gamma_s = exp(int_s^T r_hat),
    M_s     = exp(int_s^T (2 r_hat - |theta|^2))
              + int_s^T Gamma_u |theta_u|^2 exp(int_s^u (2 r_hat - |theta|^2)) du,
    alpha_s = (Gamma_s / M_s - 1) theta_s,     gain k = alpha (d-vector).

cubic / quartic (r_hat = r - mu), backward ODE systems integrated by RK4:
    cubic:   M' = -(3 r_hat + 2 a alpha + a alpha^2) M,   M(T) = 1
             N' = -(2 r_hat + a alpha) N,                 N(T) = 2
             Gamma' = -r_hat Gamma,                       Gamma(T) = 1
             alpha = (-M + N - Gamma) / (2M - N),         gain k = alpha theta
    quartic: M' = -(4 r_hat + 3 a alpha + 3 a alpha^2) M, M(T) = 1
             N' = -(3 r_hat + 2 a alpha + a alpha^2) N,   N(T) = 3
             Gamma' = -(2 r_hat + a alpha) Gamma,         Gamma(T) = 3
             Phi' = -r_hat Phi,                           Phi(T) = 1
             alpha = (M - N + Gamma - Phi) / (-3M + 2N - Gamma)
    with a = |theta|^2.  The alpha ratio is 0/0 at T; near T the gain is
    evaluated from its terminal Taylor series (see _terminal_series), which
    also fixes the branch.

The algebraic consistency relations
    cubic:   -(1 + 2 alpha) M + (1 + alpha) N - Gamma = 0
    quartic: (1 + 3 alpha) M - (1 + 2 alpha) N + (1 + alpha) Gamma - Phi = 0
hold along solved trajectories; they are the coefficient-level statement that
the first-order adjoint combination vanishes on the diagonal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._terminal_series import terminal_alpha_series
from .errors import (
    DegenerateDenominator,
    GridError,
    NoSolution,
    PreconditionViolated,
    RangeError,
    UtilityMismatch,
    ZeroTheta,
)
from .market import Curve, MarketModel

EQUILIBRIUM_TOL = 1e-6  # default verdict tolerance for residual curves
CONSISTENCY_TOL = 1e-9  # internal solver-consistency tolerance
_DENOM_FLOOR = 1e-10  # |denominator| below this outside the layer degenerates


class Utility(enum.Enum):
    """Terminal utility h applied to X_T - X_t e^{int mu}."""

    QUADRATIC = "quadratic"  # x^2 / 2
    CUBIC = "cubic"  # -x^3 / 3
    QUARTIC = "quartic"  # x^4 / 4
    NEGATIVE_PART = "negative_part"  # x^-


@dataclass(frozen=True)
class CoefficientCurves:
    """Solution curves of a coefficient system, tagged by utility.

    alpha is a d-vector curve for the quadratic utility (the whole gain) and
    a scalar curve for cubic/quartic (gain = alpha * theta).  lambda_ is only
    present for the quadratic utility, r_hat = r - lambda (quadratic) or
    r - mu (cubic/quartic).
    """

    utility: Utility
    M: Curve
    Gamma: Curve
    alpha: Curve
    r_hat: Curve
    N: Optional[Curve] = None
    Phi: Optional[Curve] = None
    lambda_: Optional[Curve] = None

    def __post_init__(self):
        terminal = {
            Utility.QUADRATIC: {"M": 1.0, "Gamma": 1.0},
            Utility.CUBIC: {"M": 1.0, "N": 2.0, "Gamma": 1.0},
            Utility.QUARTIC: {"M": 1.0, "N": 3.0, "Gamma": 3.0, "Phi": 1.0},
        }.get(self.utility, {})
        for name, want in terminal.items():
            curve = getattr(self, name)
            if curve is None or abs(curve.values[-1] - want) > 1e-12:
                raise UtilityMismatch(
                    f"{self.utility.value} curves need {name}(T) = {want}"
                )

    @property
    def grid(self) -> np.ndarray:
        return self.M.grid

    def consistency_residual(self) -> np.ndarray:
        """Nodewise consistency-relation residual (zeros for quadratic)."""
        al = self.alpha.values
        if self.utility is Utility.CUBIC:
            return (
                -(1.0 + 2.0 * al) * self.M.values
                + (1.0 + al) * self.N.values
                - self.Gamma.values
            )
        if self.utility is Utility.QUARTIC:
            return (
                (1.0 + 3.0 * al) * self.M.values
                - (1.0 + 2.0 * al) * self.N.values
                + (1.0 + al) * self.Gamma.values
                - self.Phi.values
            )
        return np.zeros(self.grid.size)


@dataclass(frozen=True)
class FeedbackControl:
    """Linear feedback pi_s(x) = (sigma_s')^{-1} k_s x with deterministic k.

    scale_exponent is the curve c of the state transformation
    Y = X e^{int_s^T c du} under which the control reads u = k Y: lambda for
    the quadratic utility, mu for cubic/quartic, and zero for the x^- zero
    control.
    """

    gain: Curve  # (n, d) vector curve k
    utility: Utility
    scale_exponent: Curve

    def pi(self, market: MarketModel, s, x):
        """Portfolio pi = (sigma')^{-1} k x at time s and wealth x."""
        k = np.atleast_1d(self.gain(s))
        return market.sigma_inv_T(s) @ k * x

    def scaled(self, factor: float) -> "FeedbackControl":
        """Control with gain multiplied by factor (e.g. the doubled-gain probe)."""
        return FeedbackControl(
            gain=self.gain.with_values(factor * self.gain.values),
            utility=self.utility,
            scale_exponent=self.scale_exponent,
        )

    @staticmethod
    def zero(market: MarketModel, utility: Utility) -> "FeedbackControl":
        n = market.grid.size
        return FeedbackControl(
            gain=Curve(market.grid, np.zeros((n, market.dim))),
            utility=utility,
            scale_exponent=Curve(market.grid, np.zeros(n)),
        )


@dataclass(frozen=True)
class EquilibriumResidual:
    """Pointwise equilibrium residual with its verdict."""

    curve: Curve
    sup: float
    tol: float
    passed: bool


# ---------------------------------------------------------------------------
# quadratic utility: closed forms and the multiplier inversion
# ---------------------------------------------------------------------------

def _as_node_values(curve_or_values, market: MarketModel) -> np.ndarray:
    if isinstance(curve_or_values, Curve):
        return np.asarray(curve_or_values(market.grid), dtype=float)
    vals = np.asarray(curve_or_values, dtype=float)
    if vals.ndim == 0:
        return np.full(market.grid.size, float(vals))
    if vals.shape != market.grid.shape:
        raise GridError("lambda values must live on the market grid")
    return vals


def _quadratic_g(grid, rhat, a):
    """Gamma, M and g = Gamma/M at the nodes, by exact-PL trapezoid sums."""

    def backward(f):
        areas = 0.5 * (f[1:] + f[:-1]) * np.diff(grid)
        out = np.zeros_like(f)
        out[:-1] = np.cumsum(areas[::-1])[::-1]
        return out

    R = backward(rhat)
    E = backward(2.0 * rhat - a)
    gamma = np.exp(R)
    phi = a * np.exp(R - E)
    S = backward(phi)
    M = np.exp(E) * (1.0 + S)  # both summands positive, so M > 0
    return gamma, M, np.exp(R - E) / (1.0 + S)


def solve_quadratic_coeffs(market: MarketModel, lam) -> CoefficientCurves:
    """Closed-form Gamma, M and gain alpha for the quadratic problem with
    multiplier curve lam (Curve, scalar, or node-value array)."""
    grid = market.grid
    lam_vals = _as_node_values(lam, market)
    rhat = market.r.values - lam_vals
    a = market.theta_sq().values
    gamma, M, g = _quadratic_g(grid, rhat, a)
    alpha = (g - 1.0)[:, None] * market.theta.values
    return CoefficientCurves(
        utility=Utility.QUADRATIC,
        M=Curve(grid, M),
        Gamma=Curve(grid, gamma),
        alpha=Curve(grid, alpha),
        r_hat=Curve(grid, rhat),
        lambda_=Curve(grid, lam_vals),
    )


def find_lambda_star(market: MarketModel, residual_tol: float = 1e-8):
    """Multiplier curve restoring the moving-target constraint pointwise.

    The target forces g = Gamma/M to equal ghat = 1 + (mu - r)/|theta|^2;
    inverting the Riccati flow g' = r_hat g - g|theta|^2 + g^2 |theta|^2
    (g_T = 1) gives lambda = r + (ghat - 1)|theta|^2 - ghat'/ghat.  If the
    re-solved pointwise residual exceeds residual_tol, a discrete-exact
    backward recursion replaces the analytic inversion so that the trapezoid
    pipeline reproduces ghat at the nodes to machine precision.

    Returns (lambda Curve, CoefficientCurves solved with it).
    """
    grid = market.grid
    r = market.r.values
    mu = market.mu.values
    a = market.theta_sq().values
    excess = mu - r

    zero_theta = a <= 1e-14
    if np.any(zero_theta & (np.abs(excess) > 1e-12)):
        i = int(np.argmax(zero_theta & (np.abs(excess) > 1e-12)))
        raise ZeroTheta(
            f"mu != r at s={grid[i]:g} but the market price of risk vanishes"
        )

    safe_a = np.where(zero_theta, 1.0, a)
    ghat = np.where(zero_theta, 1.0, 1.0 + excess / safe_a)

    if abs(ghat[-1] - 1.0) > 1e-9:
        raise NoSolution(
            f"terminal mismatch: mu(T)={mu[-1]:g} != r(T)={r[-1]:g}, "
            "so ghat(T) != 1 conflicts with the terminal condition g(T) = 1"
        )
    ghat[-1] = 1.0
    if np.min(ghat) <= 1e-9:
        i = int(np.argmin(ghat))
        raise NoSolution(f"ghat touches zero at s={grid[i]:g} (value {ghat[i]:.3e})")

    dghat = Curve(grid, ghat).derivative_values()
    lam = r + (ghat - 1.0) * a - dghat / ghat

    curves = solve_quadratic_coeffs(market, lam)
    resid = equilibrium_residual(curves, market, tol=residual_tol)
    if resid.sup > residual_tol:
        lam = _lambda_discrete_refinement(grid, r, a, ghat, lam)
        curves = solve_quadratic_coeffs(market, lam)
        resid = equilibrium_residual(curves, market, tol=residual_tol)
        if resid.sup > residual_tol:
            raise NoSolution(
                f"multiplier inversion left residual {resid.sup:.3e} "
                f"> {residual_tol:g} even after discrete refinement"
            )
    return curves.lambda_, curves


def _lambda_discrete_refinement(grid, r, a, ghat, lam_init):
    """Backward recursion making the trapezoid pipeline hit ghat exactly.

    Solves, node by node from T, the equations g_i = ghat_i where g is the
    discrete Gamma/M of _quadratic_g; each step is linear in e^{D_i} with
    D_i = int_{s_i}^T (a - r_hat).  The terminal r_hat keeps its analytic
    value; consecutive nodes then alternate around the analytic curve at the
    grid-error scale while the residual drops to machine precision.
    """
    dt = np.diff(grid)
    rhat = r - lam_init
    n = grid.size - 1
    D = np.zeros(grid.size)
    S = np.zeros(grid.size)
    phi = np.zeros(grid.size)
    phi[n] = a[n]  # e^{D_N} = 1
    out = rhat.copy()
    for i in range(n - 1, -1, -1):
        h = dt[i]
        denom = 1.0 - ghat[i] * 0.5 * h * a[i]
        x = ghat[i] * (1.0 + S[i + 1] + 0.5 * h * phi[i + 1]) / denom
        D[i] = np.log(x)
        phi[i] = a[i] * x
        S[i] = S[i + 1] + 0.5 * h * (phi[i] + phi[i + 1])
        out[i] = a[i] + a[i + 1] - out[i + 1] - 2.0 * (D[i] - D[i + 1]) / h
    return r - out


# ---------------------------------------------------------------------------
# cubic / quartic utilities: backward RK4 with terminal-series layer
# ---------------------------------------------------------------------------

_SYSTEMS = {
    Utility.CUBIC: {
        "kind": "cubic",
        "terminal": np.array([1.0, 2.0, 1.0]),
        "coef": np.array([[3.0, 2.0, 1.0], [2.0, 1.0, 0.0], [1.0, 0.0, 0.0]]),
        "num": np.array([-1.0, 1.0, -1.0]),
        "den": np.array([2.0, -1.0, 0.0]),
    },
    Utility.QUARTIC: {
        "kind": "quartic",
        "terminal": np.array([1.0, 3.0, 3.0, 1.0]),
        "coef": np.array(
            [[4.0, 3.0, 3.0], [3.0, 2.0, 1.0], [2.0, 1.0, 0.0], [1.0, 0.0, 0.0]]
        ),
        "num": np.array([1.0, -1.0, 1.0, -1.0]),
        "den": np.array([-3.0, 2.0, -1.0, 0.0]),
    },
}


def _trailing_linear_window(grid, *node_values):
    """Largest tau such that every given nodewise curve is affine on
    [T - tau, T] (within 1e-12 of the trailing segment's extrapolation)."""
    T = grid[-1]
    tau = T - grid[0]
    for vals in node_values:
        scale = max(1.0, float(np.max(np.abs(vals))))
        slope = (vals[-1] - vals[-2]) / (grid[-1] - grid[-2])
        line = vals[-1] + slope * (grid - T)
        ok = np.abs(vals - line) <= 1e-12 * scale
        i = grid.size - 1
        while i > 0 and ok[i - 1]:
            i -= 1
        tau = min(tau, T - grid[i])
    return max(tau, grid[-1] - grid[-2])


def _series_layer_width(grid, series, tau_lin):
    """Fixed layer width: capped by the trailing-linear window, T/8, and the
    tau at which the last retained series term would exceed ~1e-13."""
    T = grid[-1]
    tau_c = min(tau_lin, T / 8.0)
    tail = abs(series[-1])
    if tail > 0.0:
        k = series.size - 1
        tau_c = min(tau_c, (1e-13 / tail) ** (1.0 / k))
    # never shrink below the first backward step: the ratio is unusable there
    return max(tau_c, (grid[-1] - grid[-2]) * (1.0 + 1e-9))


def _solve_power_coeffs(market: MarketModel, utility: Utility) -> CoefficientCurves:
    sysdef = _SYSTEMS[utility]
    grid = market.grid
    n = grid.size - 1
    rhat_nodes = market.r.values - market.mu.values
    a_nodes = market.theta_sq().values

    if np.max(np.abs(rhat_nodes)) == 0.0:
        if np.max(np.abs(a_nodes)) == 0.0:
            term = sysdef["terminal"]
            vals = np.tile(term, (grid.size, 1))
            return _package_power(utility, grid, vals, np.zeros(grid.size), rhat_nodes)
        # r - mu == 0 with risk present: the flow stays at its terminal data
        # and the gain ratio is 0/0 on all of [0, T], not just at T
        raise DegenerateDenominator(
            "r_hat = r - mu vanishes identically: the gain denominator is zero "
            "on the whole horizon (the zero-gain control is the trivial answer)"
        )

    dt_last = grid[-1] - grid[-2]
    rhat_taylor = [rhat_nodes[-1], -(rhat_nodes[-1] - rhat_nodes[-2]) / dt_last]
    a_taylor = [a_nodes[-1], -(a_nodes[-1] - a_nodes[-2]) / dt_last]
    series = terminal_alpha_series(rhat_taylor, a_taylor, sysdef["kind"], n_coeff=6)
    tau_lin = _trailing_linear_window(grid, rhat_nodes, a_nodes)
    tau_c = _series_layer_width(grid, series, tau_lin)
    poly = series[::-1]  # np.polyval ordering

    coef = sysdef["coef"]
    num_c = sysdef["num"]
    den_c = sysdef["den"]
    T = grid[-1]

    rhat_mid = 0.5 * (rhat_nodes[1:] + rhat_nodes[:-1])
    a_mid = 0.5 * (a_nodes[1:] + a_nodes[:-1])

    def alpha_at(tau, y):
        if tau <= tau_c * (1.0 + 1e-12):
            return float(np.polyval(poly, tau))
        num = float(num_c @ y)
        den = float(den_c @ y)
        if abs(den) < _DENOM_FLOOR:
            raise DegenerateDenominator(
                f"gain denominator {den:.3e} at s={T - tau:g} "
                f"(|den| < {_DENOM_FLOOR:g} outside the terminal layer)"
            )
        return num / den

    def rate(y, rh, aa, al):
        g = coef[:, 0] * rh + (coef[:, 1] * al + coef[:, 2] * al * al) * aa
        return -g * y

    y = sysdef["terminal"].copy()
    out = np.empty((grid.size, y.size))
    out_alpha = np.empty(grid.size)
    out[n] = y
    out_alpha[n] = series[0]
    for i in range(n, 0, -1):
        s1, s0 = grid[i], grid[i - 1]
        h = s0 - s1  # negative: integrating backward
        rh1, rh0, rhm = rhat_nodes[i], rhat_nodes[i - 1], rhat_mid[i - 1]
        aa1, aa0, aam = a_nodes[i], a_nodes[i - 1], a_mid[i - 1]
        sm = s1 + 0.5 * h
        k1 = rate(y, rh1, aa1, alpha_at(T - s1, y))
        y2 = y + 0.5 * h * k1
        k2 = rate(y2, rhm, aam, alpha_at(T - sm, y2))
        y3 = y + 0.5 * h * k2
        k3 = rate(y3, rhm, aam, alpha_at(T - sm, y3))
        y4 = y + h * k3
        k4 = rate(y4, rh0, aa0, alpha_at(T - s0, y4))
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i - 1] = y
        tau = T - s0
        if tau <= tau_c * (1.0 + 1e-12):
            out_alpha[i - 1] = float(np.polyval(poly, tau))
        else:
            num = float(num_c @ y)
            den = float(den_c @ y)
            if abs(den) < _DENOM_FLOOR:
                raise DegenerateDenominator(
                    f"gain denominator {den:.3e} at node s={s0:g}"
                )
            out_alpha[i - 1] = num / den
    return _package_power(utility, grid, out, out_alpha, rhat_nodes)


def _package_power(utility, grid, state_values, alpha_values, rhat_nodes):
    curves = dict(
        M=Curve(grid, state_values[:, 0]),
        N=Curve(grid, state_values[:, 1]),
        Gamma=Curve(grid, state_values[:, 2]),
    )
    if utility is Utility.QUARTIC:
        curves["Phi"] = Curve(grid, state_values[:, 3])
    out = CoefficientCurves(
        utility=utility,
        alpha=Curve(grid, alpha_values),
        r_hat=Curve(grid, rhat_nodes),
        **curves,
    )
    sup = float(np.max(np.abs(out.consistency_residual())))
    if sup > CONSISTENCY_TOL:
        raise DegenerateDenominator(
            f"solver left a consistency residual of {sup:.3e} "
            f"(> {CONSISTENCY_TOL:g}); the gain ratio broke down"
        )
    return out


def solve_cubic_coeffs(market: MarketModel) -> CoefficientCurves:
    """Backward RK4 solve of the cubic coefficient system (r_hat = r - mu)."""
    return _solve_power_coeffs(market, Utility.CUBIC)


def solve_quartic_coeffs(market: MarketModel) -> CoefficientCurves:
    """Backward RK4 solve of the quartic coefficient system (r_hat = r - mu)."""
    return _solve_power_coeffs(market, Utility.QUARTIC)


def particular_solution_cubic(market: MarketModel) -> CoefficientCurves:
    """Closed-form cubic solution alpha = -1/2 for mu = r - |theta|^2 / 2."""
    grid = market.grid
    a = market.theta_sq().values
    want_mu = market.r.values - 0.5 * a
    gap = np.max(np.abs(market.mu.values - want_mu))
    if gap > 1e-10:
        raise PreconditionViolated(
            f"required return is not r - |theta|^2/2 (max gap {gap:.3e})"
        )
    rhat = market.r.values - market.mu.values
    R = Curve(grid, rhat).backward_integral()
    vals = np.stack([np.exp(1.5 * R), 2.0 * np.exp(R), np.exp(R)], axis=1)
    return _package_power(Utility.CUBIC, grid, vals, np.full(grid.size, -0.5), rhat)


def necessary_condition_cubic(market: MarketModel) -> dict:
    """Terminal-limit admissibility for the cubic problem.

    eta = r_hat(T)/|theta(T)|^2; nonzero terminal gains must solve
    2 abar^2 + 3 abar + 2 eta = 0, so eta <= 9/16 is necessary.
    """
    a_T = float(market.theta_sq().values[-1])
    if a_T <= 1e-14:
        raise ZeroTheta("|theta(T)|^2 = 0: eta undefined")
    rhat_T = float(market.r.values[-1] - market.mu.values[-1])
    eta = rhat_T / a_T
    disc = 9.0 - 16.0 * eta
    if disc < -1e-12:
        roots: list[float] = []
    elif abs(disc) <= 1e-12:
        roots = [-0.75]
    else:
        sq = float(np.sqrt(disc))
        roots = [(-3.0 + sq) / 4.0, (-3.0 - sq) / 4.0]
    return {"eta": eta, "roots": roots, "admissible": eta <= 9.0 / 16.0 + 1e-12}


# ---------------------------------------------------------------------------
# residuals, controls, adjoints
# ---------------------------------------------------------------------------

def equilibrium_residual(
    curves: CoefficientCurves, market: MarketModel, tol: float = EQUILIBRIUM_TOL
) -> EquilibriumResidual:
    """Pointwise equilibrium residual curve and PASS/FAIL verdict.

    quadratic: r + alpha' theta - mu (the moving-target condition);
    cubic/quartic: r_hat + alpha |theta|^2 (the martingale-drift condition).
    """
    if not np.array_equal(curves.grid, market.grid):
        raise UtilityMismatch("curves were not solved on this market's grid")
    a = market.theta_sq().values
    if curves.utility is Utility.QUADRATIC:
        if curves.lambda_ is None:
            raise UtilityMismatch("quadratic curves need their multiplier")
        gain_drift = np.einsum("ij,ij->i", curves.alpha.values, market.theta.values)
        resid = market.r.values + gain_drift - market.mu.values
    elif curves.utility in (Utility.CUBIC, Utility.QUARTIC):
        resid = curves.r_hat.values + curves.alpha.values * a
    else:
        raise UtilityMismatch(f"no residual defined for {curves.utility.value}")
    sup = float(np.max(np.abs(resid)))
    return EquilibriumResidual(
        curve=Curve(market.grid, resid), sup=sup, tol=tol, passed=sup <= tol
    )


def feedback_control(curves: CoefficientCurves, market: MarketModel) -> FeedbackControl:
    """Feedback gain curve k with policy pi_s(x) = (sigma_s')^{-1} k_s x."""
    if curves.utility is Utility.QUADRATIC:
        gain_vals = curves.alpha.values
        scale = curves.lambda_
    elif curves.utility in (Utility.CUBIC, Utility.QUARTIC):
        gain_vals = curves.alpha.values[:, None] * market.theta.values
        scale = market.mu
    else:
        raise UtilityMismatch(f"no feedback control for {curves.utility.value}")
    if not np.all(np.isfinite(gain_vals)):
        raise UtilityMismatch("gain curve is not finite")
    return FeedbackControl(
        gain=Curve(market.grid, gain_vals),
        utility=curves.utility,
        scale_exponent=scale,
    )


@dataclass(frozen=True)
class AdjointEvaluator:
    """Closed-form first-order adjoint combination Lambda_s^t.

    The formulas are factored through the consistency relation so that the
    diagonal s = t, y_s = y_t is a structural zero (no cancellation):

    quadratic: Gamma_s theta_s (y_s - y_t)
    cubic:     theta_s (y_s - y_t) [-(1+2a)M(y_s+y_t) + (1+a)N y_t]
    quartic:   theta_s (y_s - y_t) [(1+3a)M(y_s^2+y_s y_t+y_t^2)
                                    - (1+2a)N y_t (y_s+y_t) + (1+a)G y_t^2]
    """

    curves: CoefficientCurves
    market: MarketModel

    def adjoint_lambda(self, t: float, s: float, y_t, y_s) -> np.ndarray:
        if not (0.0 <= t <= s <= self.market.horizon + 1e-12):
            raise RangeError(f"need 0 <= t <= s <= T, got t={t}, s={s}")
        theta = np.atleast_1d(self.market.theta(s))
        y_t = np.asarray(y_t, dtype=float)
        y_s = np.asarray(y_s, dtype=float)
        diff = y_s - y_t
        util = self.curves.utility
        if util is Utility.QUADRATIC:
            scalar = self.curves.Gamma(s) * diff
        elif util is Utility.CUBIC:
            al = self.curves.alpha(s)
            bracket = (
                -(1.0 + 2.0 * al) * self.curves.M(s) * (y_s + y_t)
                + (1.0 + al) * self.curves.N(s) * y_t
            )
            scalar = diff * bracket
        elif util is Utility.QUARTIC:
            al = self.curves.alpha(s)
            bracket = (
                (1.0 + 3.0 * al) * self.curves.M(s) * (y_s * y_s + y_s * y_t + y_t * y_t)
                - (1.0 + 2.0 * al) * self.curves.N(s) * y_t * (y_s + y_t)
                + (1.0 + al) * self.curves.Gamma(s) * y_t * y_t
            )
            scalar = diff * bracket
        else:
            raise UtilityMismatch(f"no adjoint for {util.value}")
        return np.asarray(scalar)[..., None] * theta
