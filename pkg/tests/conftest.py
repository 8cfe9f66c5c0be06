import numpy as np
import pytest
import scipy.sparse as sp


def random_interactions(rng, n_users, n_items, density):
    """Seeded Bernoulli feedback matrix as binary CSR."""
    mask = rng.random((n_users, n_items)) < density
    return sp.csr_array(mask.astype(np.float64))


@pytest.fixture
def rng():
    return np.random.default_rng(42)
