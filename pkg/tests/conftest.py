import numpy as np
import pytest

from tether_guide.config import scenario_from_dict
from tether_guide.model import AdmittanceParams, CableParams, HumanParams, ModelParams


def make_params(d_H=30.0, d_A=100.0, mass=70.0, M_A=5.0, l0=1.5, k=100.0, h=1.0):
    return ModelParams(HumanParams(mass, d_H), AdmittanceParams(M_A, d_A), CableParams(l0, k), h)


def make_scenario(**tables):
    """Scenario from config tables; unspecified keys take the documented defaults."""
    d = {"name": tables.pop("name", "test"), "guidance": {"target": [20.0, 0.0, 1.0]}}
    for table, values in tables.items():
        d.setdefault(table, {}).update(values)
    return scenario_from_dict(d)


@pytest.fixture
def params():
    return make_params()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
