import pytest

from tests.support import load_corpus


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def small_corpus(corpus):
    # programs cheap enough for the unwidened per-state-store machine
    from flowladder.syntax import node_count

    return [(n, s, e) for n, s, e in corpus if node_count(e) <= 16]
