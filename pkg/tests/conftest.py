import numpy as np
import pytest

from audiotag.toy import make_toy_dataset
from audiotag.training import ClipDataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_toy():
    """16 half-second clips, four classes."""
    waves, targets = make_toy_dataset(16, seed=7, duration=0.5)
    return ClipDataset(waves, targets)
