import pytest

from adaptest import fixtures
from adaptest.dsl import parse
from adaptest.model import load_model
from adaptest.repo import load_repository


def suite(name: str):
    folder = fixtures.path(name)
    return [parse(p.read_text()) for p in sorted(folder.iterdir()) if p.suffix == ".test"]


@pytest.fixture
def signup_v1():
    return load_model(fixtures.read("signup_v1.json"))


@pytest.fixture
def signup_v2():
    return load_model(fixtures.read("signup_v2.json"))


@pytest.fixture
def signup_repo():
    return load_repository(fixtures.read("signup_repo.json"))


@pytest.fixture
def signup_suite():
    return suite("signup_suite")


@pytest.fixture
def store():
    return load_model(fixtures.read("store_v1.json"))


@pytest.fixture
def store_repo():
    return load_repository(fixtures.read("store_repo.json"))


@pytest.fixture
def store_suite():
    return suite("store_suite")


@pytest.fixture
def portal():
    return load_model(fixtures.read("portal_v1.json"))


@pytest.fixture
def portal_repo():
    return load_repository(fixtures.read("portal_repo.json"))


# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
