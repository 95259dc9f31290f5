import numpy as np
import pytest

from mfgfinite import kernels, model
from mfgfinite.equilibrium import picard_solve
from mfgfinite.hjb import default_flows, default_grid


def make_spec(**family):
    """Two-state spec with rates = control; ``family`` overrides family entries."""
    cfg = model.quadratic_two_state_config()
    cfg["family"].update(family)
    return model.spec_from_config(cfg)


@pytest.fixture(scope="session")
def quad_spec():
    return model.spec_from_config(model.quadratic_two_state_config())


@pytest.fixture(scope="session")
def quad_solution(quad_spec):
    from mfgfinite.hjb import solve_value

    grid = default_grid(quad_spec.T)
    p, nu = default_flows(quad_spec, grid)
    V, pol = solve_value(quad_spec, p, nu)
    return p, nu, V, pol


@pytest.fixture(scope="session")
def mono_spec():
    return model.spec_from_config(model.monotone_congestion_config())


@pytest.fixture(scope="session")
def mono_sol(mono_spec):
    return picard_solve(mono_spec)


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    prev = kernels.BACKEND
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
