import numpy as np
import pytest

from qefilt import Graph, ShiftKind, build_shift
from qefilt._backend import HAVE_COMPILED

BACKENDS = ["python"] + (["compiled"] if HAVE_COMPILED else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def path3():
    return Graph(3, ((0, 1, 1.0), (1, 2, 1.0)))


@pytest.fixture
def path3_shift(path3):
    return build_shift(path3, ShiftKind.ADJACENCY)


@pytest.fixture
def two_node():
    return Graph(2, ((0, 1, 1.0),))


@pytest.fixture
def cycle4():
    return Graph(4, ((0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)))


def assert_symmetric(m, tol=0.0):
    assert np.max(np.abs(m - m.T)) <= tol
