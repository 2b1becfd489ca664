import numpy as np
import pytest

from fusqa.phantom import generate_phantoms


@pytest.fixture(scope="session")
def phantoms():
    """A small fixed set of domain-A phantoms shared by several test modules."""
    return generate_phantoms(range(10), "A")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
