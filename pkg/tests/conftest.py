import math

import pytest

from hestondg.model import Domain, HestonParams

TABLE1 = HestonParams(kappa=1.0, theta=0.09, sigma=0.4, rho=-0.7, r_d=0.05, r_f=0.01, T=1.0, K=105.0, S0=100.0, v0=0.25)
TABLE4 = HestonParams(
    kappa=2.5, theta=0.06, sigma=0.5, rho=-0.1, r_d=math.log(1.052), r_f=math.log(1.048), T=0.25, K=1.0, S0=1.0, v0=0.05225
)


@pytest.fixture
def table1():
    return TABLE1


@pytest.fixture
def table4():
    return TABLE4


@pytest.fixture
def unit_square():
    return Domain(0.0, 1.0, 0.0, 1.0)
