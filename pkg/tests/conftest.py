import pytest

from movetarget import build_market


@pytest.fixture(scope="session")
def cubic_market():
    """Constant market satisfying mu = r - |theta|^2/2 (theta = 0.2)."""
    return build_market(
        {
            "dim": 1,
            "horizon": 1.0,
            "grid": {"n_steps": 256},
            "r": 0.05,
            "mu_x": 0.09,
            "sigma": 0.2,
            "mu": 0.03,
        }
    )


@pytest.fixture(scope="session")
def lambda_market():
    """Smooth mu with mu(T) = r(T): the multiplier-search market."""
    return build_market(
        {
            "dim": 1,
            "horizon": 1.0,
            "grid": {"n_steps": 1024},
            "r": 0.03,
            "mu_x": 0.07,
            "sigma": 0.2,
            "mu": {"grid": [0.0, 1.0], "values": [0.05, 0.03]},
        }
    )


@pytest.fixture(scope="session")
def trivial_market():
    """mu == r: the quadratic fixed point."""
    return build_market(
        {
            "dim": 1,
            "horizon": 1.0,
            "grid": {"n_steps": 512},
            "r": 0.05,
            "mu_x": 0.09,
            "sigma": 0.2,
            "mu": 0.05,
        }
    )


@pytest.fixture(scope="session")
def d2_market():
    """Two assets, diagonal volatility."""
    return build_market(
        {
            "dim": 2,
            "horizon": 1.0,
            "grid": {"n_steps": 128},
            "r": 0.03,
            "mu_x": [0.06, 0.05],
            "sigma": [0.25, 0.2],
            "mu": 0.03,
        }
    )


def constant_market(r=0.05, theta=0.2, mu=0.03, n_steps=256, horizon=1.0, sigma=0.2):
    """Constant-coefficient market with the requested theta."""
    return build_market(
        {
            "dim": 1,
            "horizon": horizon,
            "grid": {"n_steps": n_steps},
            "r": r,
            "mu_x": r + sigma * theta,
            "sigma": sigma,
            "mu": mu,
        }
    )
