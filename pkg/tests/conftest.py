import numpy as np
import pytest

from tilekit.synth import edgy_image, textured_corpus


@pytest.fixture(scope="session")
def corpus_512():
    """20 textured 512x512 RGB images shared by the strategy-quality suites."""
    return textured_corpus(20, 512, 512, channels=3, seed=100)


@pytest.fixture(scope="session")
def edge_corpus_256():
    """64 edge-rich 256x256 images for projection-training experiments."""
    return [edgy_image(256, 256, seed=300 + i) for i in range(64)]


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
