import pytest

from coopplan import HyperParams, generate_intersection, generate_t_junction
from coopplan.baseline import solve_centralized
from coopplan.planner import plan_decentralized

T_JUNCTION_HYPER = HyperParams(sigma=0.1, rho=0.01, inner_iters=2)
INTERSECTION_HYPER = HyperParams(sigma=0.01, rho=0.001, inner_iters=3)


@pytest.fixture(scope="session")
def t_junction():
    return generate_t_junction()


@pytest.fixture(scope="session")
def t_junction_runs(t_junction):
    return (plan_decentralized(t_junction, T_JUNCTION_HYPER),
            solve_centralized(t_junction, T_JUNCTION_HYPER))


@pytest.fixture(scope="session")
def intersection():
    return generate_intersection(12)


@pytest.fixture(scope="session")
def intersection_runs(intersection):
    return (plan_decentralized(intersection, INTERSECTION_HYPER),
            solve_centralized(intersection, INTERSECTION_HYPER))
