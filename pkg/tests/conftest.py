from __future__ import annotations

import pytest

from seebench.catalog import default_catalog
from seebench.gateway import MockBackend, MockCET, base_handle
from seebench.prompts import build_corpus
from seebench.verifiers import DEFAULT_SUITE, OracleVerifier


@pytest.fixture(scope="session")
def tree():
    return default_catalog()


@pytest.fixture(scope="session")
def corpus(tree):
    return build_corpus(tree)


@pytest.fixture
def backend(tree):
    return MockBackend(tree)


@pytest.fixture
def base(backend):
    return base_handle(backend, backend.model_id)


@pytest.fixture
def make_cet(backend):
    def make(name="mock-cet", **kw):
        return MockCET(backend, name, **kw)

    return make


@pytest.fixture(scope="session")
def oracle(tree):
    return OracleVerifier(tree)


@pytest.fixture(scope="session")
def suite(tree):
    return [OracleVerifier(tree, vid, fam) for vid, fam in DEFAULT_SUITE]


def sub_corpus(corpus, tree, *names):
    ids = {tree.node(n).id for n in names}
    return [r for r in corpus if r.object_id in ids]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in results:
        terminalreporter.write_line(f"{status} {name}" + (f": {detail}" if detail else ""))
