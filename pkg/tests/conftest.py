import math

import numpy as np
import pytest

from sublinear_lab.eigen import principal_indefinite_eigen
from sublinear_lab.grid import GridSpec, build_grid
from sublinear_lab.weights import CorpusCase, corpus_exact, make_weight

REMARK = CorpusCase("remark-q0", {"q": 0.5})
CUBIC = CorpusCase("ti-cubic", {"q": 0.5})
REM_I01 = CorpusCase("rem-I01", {"sigma": 0.9})


def remark(nodes):
    g = build_grid(GridSpec.interval(0.0, math.pi, nodes))
    return g, make_weight(g, REMARK)


@pytest.fixture(scope="session")
def remark1025():
    return remark(1025)


@pytest.fixture(scope="session")
def remark2049():
    return remark(2049)


@pytest.fixture(scope="session")
def normalized1025(remark1025):
    g, w = remark1025
    pair = principal_indefinite_eigen(g, w)
    return g, w.scaled(pair.eigenvalue), pair.eigenvalue


@pytest.fixture(scope="session")
def cubic1025():
    g = build_grid(GridSpec.interval(-2.0, 2.0, 1025))
    return g, corpus_exact(CUBIC, g)


@pytest.fixture(scope="session")
def i01_ball():
    g = build_grid(GridSpec.ball(1.0, 1, 401))
    return g, make_weight(g, REM_I01)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
