import numpy as np
import pytest

from dqopt import SimConfig, reference_spin_system, zcw_gamma_scheme


def pytest_configure(config):
    # two crystallite-loop threads; results are thread-count independent
    import numba
    numba.set_num_threads(min(2, numba.config.NUMBA_NUM_THREADS))


@pytest.fixture(scope="session")
def maleate():
    return reference_spin_system()


@pytest.fixture(scope="session")
def cfg_fast():
    """Small powder + default stepping, for structural tests."""
    return SimConfig(rotor_freq=10204.0, powder=zcw_gamma_scheme(21, 2))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
