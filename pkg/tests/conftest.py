import numpy as np
import pytest

from cprs.lattice import BoxGeometry, Configuration
from cprs.params import Params


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: full-scale acceptance criteria (slower)"
    )


@pytest.fixture
def line8():
    return BoxGeometry(1, 8)


@pytest.fixture
def base_params():
    return Params(2.0, 0.5, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def single_wild(box, site=None):
    site = box.n_sites // 2 if site is None else site
    return Configuration.from_wild_sites(box, [site])
