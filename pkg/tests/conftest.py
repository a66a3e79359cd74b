import pytest

from vsl import scenarios
from vsl.core import record_demonstration


@pytest.fixture(scope="session")
def alphabet_fixture():
    return scenarios.alphabet()


@pytest.fixture(scope="session")
def alphabet_model(alphabet_fixture):
    return record_demonstration(alphabet_fixture.world, alphabet_fixture.script)


@pytest.fixture(scope="session")
def pushpull_fixture():
    return scenarios.pushpull()
