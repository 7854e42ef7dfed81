import numpy as np
import pytest

from pshdisc.domain import Domain
from pshdisc.structure import QTensor, named_structure, standard_structure


@pytest.fixture(scope="session")
def ball():
    return Domain(np.zeros(2), 1.0)


@pytest.fixture(scope="session")
def j_st():
    return standard_structure()


@pytest.fixture(scope="session")
def q_st(j_st):
    return QTensor(j_st)


@pytest.fixture(scope="session", params=[0.01, 0.05])
def j_small(request, ball):
    return named_structure("conjugated", "bump", request.param, ball)


@pytest.fixture(scope="session")
def j05(ball):
    return named_structure("conjugated", "bump", 0.05, ball)


@pytest.fixture(scope="session")
def q05(j05):
    return QTensor(j05)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
