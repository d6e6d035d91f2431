import pytest

from assetvalue.knowledge import KnowledgeBase
from assetvalue.synthetic import generate_corpus


@pytest.fixture(scope="session")
def corpus():
    return generate_corpus(1200, seed=7)


@pytest.fixture(scope="session")
def kb(corpus):
    return KnowledgeBase(frozenset(corpus.words), frozenset(corpus.adult_words),
                         frozenset(corpus.trademarks), dict(corpus.tld_counts))


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("tests.test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)
