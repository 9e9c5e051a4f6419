import pytest

from epmeas.instrument import bernoulli, cycle, trivial

from factory import ACCEPTANCE, random_suite


@pytest.fixture(scope="session")
def bern():
    return bernoulli(0.7)


@pytest.fixture(scope="session")
def cyc():
    return cycle(3, 0.8)


@pytest.fixture(scope="session")
def one():
    return trivial(1)


@pytest.fixture(scope="session")
def suite():
    return random_suite(25)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
