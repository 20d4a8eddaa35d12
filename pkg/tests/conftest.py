import numpy as np
import pytest

from universal_cl import GaussianModel, OptimizerSettings, bivariate_bernoulli, binary_loglinear


@pytest.fixture
def gauss():
    return GaussianModel(2, [[1.0, 0.5], [0.5, 1.0]])


@pytest.fixture
def std_gauss():
    return GaussianModel(2, np.eye(2))


@pytest.fixture
def gauss3():
    cov = np.array([[2.0, 0.6, 0.3], [0.6, 1.0, -0.4], [0.3, -0.4, 1.5]])
    return GaussianModel(3, cov)


@pytest.fixture
def bern():
    return bivariate_bernoulli()


@pytest.fixture
def ising3():
    return binary_loglinear(3)


@pytest.fixture
def fast():
    return OptimizerSettings(restarts=1)
