import numpy as np
import pytest

from weyl_abc.config import get_settings
from weyl_abc.models import FreePotential, InitialCondition
from weyl_abc.services.fem import assemble_operators, build_mesh, sample_initial


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-resolution acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch):
    for key in ("WEYL_ABC_THREADS", "WEYL_ABC_FREQ_CHUNK_SIZE", "WEYL_ABC_MAX_FAILURE_RATIO"):
        monkeypatch.delenv(key, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def small_mesh():
    return build_mesh(-5.0, 5.0, 128, 4)


@pytest.fixture
def free_ops(small_mesh):
    return assemble_operators(small_mesh, FreePotential())


@pytest.fixture
def beam(small_mesh):
    return sample_initial(small_mesh, InitialCondition())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
