import numpy as np
import pytest

from gadnr.graph import AttributedGraph


@pytest.fixture
def triangle():
    return AttributedGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)], np.eye(3))


@pytest.fixture
def star():
    return AttributedGraph.from_edges(6, [(0, i) for i in range(1, 6)], np.arange(12.0).reshape(6, 2))
