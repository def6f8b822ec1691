import numpy as np
import pytest

from mildsolve import Control, StateVector, TrajectoryGrid


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_trajectory(rng, n_t, dim, scale=1.0, T=1.0, norm_kind=2):
    states = scale * rng.standard_normal((n_t + 1, dim))
    return TrajectoryGrid(T, states, norm_kind)


def constant_control(value, n_t, T=1.0, channels=1):
    return Control(T, np.full((channels, n_t), float(value)))


def scalar_state(value, norm_kind=2):
    return StateVector([float(value)], norm_kind)
