import numpy as np
import pytest

from wavepyr.corpus import generate_toy_corpus


@pytest.fixture(scope="session")
def toy_corpus_dir(tmp_path_factory):
    """Full seeded toy corpus: 8 classes x 32 images at 64x64."""
    path = tmp_path_factory.mktemp("corpus_full")
    generate_toy_corpus(str(path), per_class=32, size=64, seed=0)
    return str(path)


@pytest.fixture(scope="session")
def mini_corpus_dir(tmp_path_factory):
    """Small corpus (8 classes x 4 images) for fast CLI runs."""
    path = tmp_path_factory.mktemp("corpus_mini")
    generate_toy_corpus(str(path), per_class=4, size=64, seed=0)
    return str(path)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
