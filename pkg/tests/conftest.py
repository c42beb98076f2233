import numpy as np
import pytest

from dialoq.corpusgen import generate_corpus
from dialoq.runtime import tune_runtime
from dialoq.schema import load_fixture
from dialoq.vocab import build_vocab_and_catalog

tune_runtime()


@pytest.fixture(scope="session")
def main_schema():
    return load_fixture("main")


@pytest.fixture(scope="session")
def alt_schema():
    return load_fixture("alt")


@pytest.fixture(scope="session")
def small_corpus(main_schema):
    return generate_corpus(main_schema, 300, seed=42)


@pytest.fixture(scope="session")
def vocab_catalog(small_corpus):
    return build_vocab_and_catalog(small_corpus, k_max=64)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
