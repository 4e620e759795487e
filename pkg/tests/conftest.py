import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qnsub.function_model import Domain, FunctionSpec, ScalarField, sample_to_grid
from qnsub.pairs import TestFunctionPair, map_from_json

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def power_map(a):
    return map_from_json({"kind": "power", "params": [a]})


@pytest.fixture
def example_pair():
    """phi(s) = s^2, psi = (log+ t)^2, s0 = 1, s1 = 2, n = 2, so psi^-1 o phi = exp."""
    psi = map_from_json({"kind": "log-plus-power", "params": [2]})
    return TestFunctionPair(power_map(2), psi, 1, 2, 1.0, 2)


@pytest.fixture
def square():
    return Domain.box((-1.0, -1.0), (1.0, 1.0), 1 / 32)


def grid(spec_kind, params, domain):
    return sample_to_grid(FunctionSpec(spec_kind, tuple(params)), domain)


def const_field(domain, c):
    return ScalarField(domain, np.full(domain.shape, float(c)))
