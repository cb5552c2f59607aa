"""Terminal Taylor continuation of the cubic/quartic feedback gain.

The gain ratio alpha = num/den is 0/0 at the terminal time: for the cubic,
num = -M + N - Gamma and den = 2M - N both vanish there (linearly); for the
quartic, num = M - N + Gamma - Phi and den = -3M + 2N - Gamma vanish to
second order.  Writing tau = T - s and expanding the coefficient ODE system,
the order-1 coefficient of the residual num - den*alpha is a cubic polynomial
in abar = alpha(T) whose roots are the admissible terminal limits (for the
cubic this is abar (2 a abar^2 + 3 a abar + 2 rhat) = 0, the necessary
condition behind eta <= 9/16).  Higher-order residual coefficients are affine
in each successive Taylor coefficient of alpha, so the continuation
alpha(tau) = abar + a1 tau + a2 tau^2 + ... is solved order by order,
numerically, with truncated polynomial arithmetic.  Orders whose residual is
identically zero (the quartic's extra degeneracy) are skipped.
"""

from __future__ import annotations

import numpy as np

from .errors import NoTerminalLimit

# rate tables: dZ/dtau = (c_r rhat + c_1 alpha a + c_2 alpha^2 a) Z, Z(0)=z0,
# with a = |theta|^2; states ordered as the solver integrates them.
_RATES = {
    "cubic": (  # M, N, Gamma
        (3.0, 2.0, 1.0, 1.0),
        (2.0, 1.0, 0.0, 2.0),
        (1.0, 0.0, 0.0, 1.0),
    ),
    "quartic": (  # M, N, Gamma, Phi
        (4.0, 3.0, 3.0, 1.0),
        (3.0, 2.0, 1.0, 3.0),
        (2.0, 1.0, 0.0, 3.0),
        (1.0, 0.0, 0.0, 1.0),
    ),
}
# num/den as linear combinations of the states
_COMBOS = {
    "cubic": ((-1.0, 1.0, -1.0), (2.0, -1.0, 0.0)),
    "quartic": ((1.0, -1.0, 1.0, -1.0), (-3.0, 2.0, -1.0, 0.0)),
}


def _poly_mul(p: np.ndarray, q: np.ndarray, deg: int) -> np.ndarray:
    out = np.zeros(deg + 1)
    for i in range(min(p.size, deg + 1)):
        pi = p[i]
        if pi == 0.0:
            continue
        jmax = deg - i
        out[i : i + jmax + 1] += pi * q[: jmax + 1]
    return out


def _residual_series(alpha, rhat, a, deg, kind):
    """Taylor coefficients of num(tau) - den(tau) * alpha(tau)."""
    aa = _poly_mul(alpha, alpha, deg)
    alpha_a = _poly_mul(alpha, a, deg)
    alpha2_a = _poly_mul(aa, a, deg)
    states = []
    for (cr, c1, c2, z0) in _RATES[kind]:
        G = cr * rhat[: deg + 1] + c1 * alpha_a + c2 * alpha2_a
        Z = np.zeros(deg + 1)
        Z[0] = z0
        for k in range(deg):
            Z[k + 1] = np.dot(G[: k + 1], Z[: k + 1][::-1]) / (k + 1)
        states.append(Z)
    num_c, den_c = _COMBOS[kind]
    num = sum(c * Z for c, Z in zip(num_c, states))
    den = sum(c * Z for c, Z in zip(den_c, states))
    return num - _poly_mul(den, alpha, deg)


def terminal_branch_roots(rhat0: float, a0: float, kind: str) -> np.ndarray:
    """Real roots of the order-1 residual as a polynomial in alpha(T)."""
    deg = 3
    rhat = np.array([rhat0, 0.0, 0.0, 0.0])
    a = np.array([a0, 0.0, 0.0, 0.0])
    samples = np.array([0.0, 1.0, -1.0, 2.0])
    vals = [
        _residual_series(np.array([ab, 0.0, 0.0, 0.0]), rhat, a, deg, kind)[1]
        for ab in samples
    ]
    cpoly = np.linalg.solve(np.vander(samples, 4, increasing=True), np.array(vals))
    scale = max(abs(a0), abs(rhat0), 1e-8)
    cpoly[np.abs(cpoly) < 1e-13 * scale] = 0.0
    if not np.any(cpoly[1:]):
        return np.array([0.0])
    roots = np.roots(cpoly[::-1])
    real = np.sort(np.unique(roots[np.abs(roots.imag) < 1e-9].real))
    # zero is always a root analytically; rounding may have displaced it
    if real.size == 0 or np.min(np.abs(real)) > 1e-9:
        real = np.sort(np.append(real, 0.0))
    real[np.abs(real) < 1e-9] = 0.0
    return np.unique(real)


def terminal_alpha_series(
    rhat_taylor, a_taylor, kind: str, n_coeff: int = 4, seed: float | None = None
) -> np.ndarray:
    """Taylor coefficients [abar, a1, ..., a_{n_coeff}] of alpha in tau = T - s.

    rhat_taylor / a_taylor: Taylor coefficients of r_hat and |theta|^2 in tau
    at the terminal time (for piecewise-linear curves, value and one-sided
    slope of the trailing segment).  The branch is the real root nearest to
    `seed` (default -rhat(T)/|theta(T)|^2, the value the pointwise equilibrium
    condition would require).
    """
    deg = n_coeff + 3
    rhat = np.zeros(deg + 1)
    a = np.zeros(deg + 1)
    rt = np.asarray(rhat_taylor, dtype=float)
    at = np.asarray(a_taylor, dtype=float)
    rhat[: rt.size] = rt[: deg + 1]
    a[: at.size] = at[: deg + 1]

    roots = terminal_branch_roots(rhat[0], a[0], kind)
    if seed is None:
        seed = -rhat[0] / a[0] if abs(a[0]) > 1e-14 else 0.0
    abar = roots[np.argmin(np.abs(roots - seed))]

    alpha = np.zeros(deg + 1)
    alpha[0] = abar
    scale = max(abs(a[0]), abs(rhat[0]), 1e-8)
    k, p = 1, 2
    while k <= n_coeff and p <= deg:
        base = _residual_series(alpha, rhat, a, deg, kind)[p]
        probe = alpha.copy()
        probe[k] = 1.0
        slope = _residual_series(probe, rhat, a, deg, kind)[p] - base
        if abs(slope) > 1e-11 * max(1.0, scale):
            alpha[k] = -base / slope
            k += 1
            p += 1
        elif abs(base) <= 1e-9 * max(1.0, scale):
            p += 1  # residual order degenerate (quartic): skip
        else:
            raise NoTerminalLimit(
                f"terminal gain series inconsistent at order {p} "
                f"(residual {base:.3e} with no free coefficient)"
            )
    if k <= n_coeff:
        raise NoTerminalLimit(
            "terminal gain series underdetermined: residual orders exhausted "
            f"with coefficient {k} unsolved (degenerate market near T)"
        )
    return alpha[: n_coeff + 1]
