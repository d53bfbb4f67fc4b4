import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from koopfactor.flow import FlowHandle, find_fixed_point, find_periodic_orbit, time_one_map_jet
from koopfactor.parser import parse_field

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=400,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("KF_HYPOTHESIS", "default"))

SL_FIELD = "[x1 - x2 - x1*(x1^2 + x2^2), x1 + x2 - x2*(x1^2 + x2^2)]"


def handle(source, discrete=False, params=None, **tol):
    return FlowHandle(parse_field(source, params=params), discrete, **tol)


@pytest.fixture(scope="session")
def stuart_landau():
    h = handle(SL_FIELD)
    cyc = find_periodic_orbit(h, [1.0, 0.0], 6.0)
    return h, cyc


@pytest.fixture(scope="session")
def vanderpol():
    h = handle("[x2, mu*(1 - x1^2)*x2 - x1]", params={"mu": 1.0})
    cyc = find_periodic_orbit(h, [2.0, 0.0], 6.6)
    return h, cyc


@pytest.fixture(scope="session")
def bernoulli():
    h = handle("[-x1 + x1^2]")
    return h, find_fixed_point(h, [0.1])


def sl_isostable(x):
    r2 = x[0] ** 2 + x[1] ** 2
    return 0.5 * (1 - 1 / r2)


def sl_phase(x):
    # theta' = 1 independent of r: isochrons are radial lines
    return np.exp(1j * math.atan2(x[1], x[0]))


def exact_bernoulli(x):
    return x / (1 - x)


@pytest.fixture(scope="session")
def bernoulli_jet(bernoulli):
    h, fp = bernoulli
    return time_one_map_jet(h, fp.x0, 5)
