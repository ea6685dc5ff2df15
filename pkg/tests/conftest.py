import numpy as np
import pytest

from horolab import BumpObservable, CocycleConfig, SampleStreams, TimeChangeGenerator
from horolab.quotient import haar_sample_batch


@pytest.fixture(scope="session")
def ref_f():
    return BumpObservable(np.eye(2), 0.3, 1.0, 5)


@pytest.fixture(scope="session")
def ref_g():
    return BumpObservable(np.array([[1.0, 0.25], [0.0, 1.0]]), 0.3, 1.0, 5)


@pytest.fixture(scope="session")
def ref_psi():
    return BumpObservable(np.eye(2), 0.35, 0.05, 5)


@pytest.fixture(scope="session")
def ref_tau(ref_psi):
    return TimeChangeGenerator(ref_psi, 0.3)


@pytest.fixture(scope="session")
def trivial_tau():
    return TimeChangeGenerator(BumpObservable(np.eye(2), 0.2, 0.0, 5), 0.0)


@pytest.fixture(scope="session")
def cfg16():
    return CocycleConfig(step=1.0 / 16.0)


@pytest.fixture(scope="session")
def haar_pool():
    streams = SampleStreams(20250808)
    g, y = haar_sample_batch(streams, np.arange(100_000, dtype=np.uint64), 1000.0)
    return g, y
