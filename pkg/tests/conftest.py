import numpy as np
import pytest

from cpr.dataio import EmbeddingSet, sample_episode, synth_gaussian
from cpr.model import CprModel, ModelConfig


@pytest.fixture(scope="session")
def small_set() -> EmbeddingSet:
    """Tiny deterministic corpus: 5 classes, 16 dims, 20 rows per class."""
    return synth_gaussian(5, 16, 0.3, 20, seed=11)


@pytest.fixture(scope="session")
def small_episode(small_set):
    return sample_episode(small_set, shots=4, seed=3)


@pytest.fixture()
def small_model(small_set):
    return CprModel.create(
        small_set.class_names, small_set.dim, ModelConfig(ctx_len=4, hidden=32), seed=3
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(2024)
