import numpy as np
import pytest

from qclat.lattice import build_topology, load_catalog

# name -> (dimension, n_nodes, n_internal, n_neighbor, node degree)
CATALOG_FACTS = {
    "square": (2, 1, 0, 2, 4),
    "triangular": (2, 1, 0, 3, 6),
    "hexagonal": (2, 2, 1, 2, 3),
    "star": (2, 6, 7, 2, 3),
    "octet": (3, 4, 6, 18, 12),
    "tetrakaidecahedral": (3, 12, 15, 9, 4),
}


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture(params=sorted(CATALOG_FACTS))
def topology_name(request):
    return request.param


@pytest.fixture
def topology(topology_name):
    return build_topology(topology_name, strut_length=1.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260814)
