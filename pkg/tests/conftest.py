import numpy as np
import pytest

from barsrate.synth import generate_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset():
    """Небольшой синтетический набор: 6 пациентов по 2 видео"""
    return generate_dataset(6, 2, seed=3)


@pytest.fixture(scope="session")
def acceptance_dataset():
    """40 пациентов по 2 видео с тяжестями 0..4"""
    distribution = {float(s): 1.0 for s in range(5)}
    return generate_dataset(40, 2, severity_distribution=distribution, seed=11)
