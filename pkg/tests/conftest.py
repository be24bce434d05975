import numpy as np
import pytest

from zipfagree.lexicon import load_lexicon
from zipfagree.tokenizer import TokenVocab


@pytest.fixture(scope="session")
def lexicon():
    return load_lexicon()


@pytest.fixture(scope="session")
def vocab(lexicon):
    return TokenVocab(lexicon)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
