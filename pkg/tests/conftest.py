import pytest

import mtemsim as m


@pytest.fixture(scope="session")
def ex41():
    return m.example41()


@pytest.fixture(scope="session")
def ex41_policy():
    return m.example41_policy()
