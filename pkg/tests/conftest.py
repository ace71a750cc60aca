import numpy as np
import pytest

from tiersim.controllers import OnboardController
from tiersim.costs import TaskSpec
from tiersim.dynamics import bicycle_model


def small_task(goal=(10.0, 0.0), obstacle=(5.0, 0.6), radius=1.0):
    return TaskSpec(goal=np.asarray(goal), q_weight=np.diag([0.1, 0.1]),
                    r_weight=np.diag([1.5, 1.5]),
                    obstacle_center=np.asarray(obstacle), obstacle_radius=radius)


def remote_task():
    """Obstacle far away: effectively unconstrained goal reaching."""
    return small_task(goal=(10.0, 0.0), obstacle=(1e6, 1e6), radius=1.0)


@pytest.fixture(scope="session")
def task():
    return small_task()


@pytest.fixture(scope="session")
def clear_task():
    return remote_task()


@pytest.fixture(scope="session")
def model():
    return bicycle_model(sampling_period=0.01, rear_axle=0.5)


@pytest.fixture(scope="session")
def onboard_fast(clear_task):
    """Responsive onboard loop used where rollout convergence matters."""
    return OnboardController(clear_task, horizon=25, gain=4.0, lookahead=10.0)
