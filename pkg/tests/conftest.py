import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import fixtures


@pytest.fixture
def drone_doc():
    return fixtures.drone_document()


@pytest.fixture
def drone_kdoc():
    return fixtures.drone_kdoc()


@pytest.fixture
def workshop_doc():
    return fixtures.workshop_document()


@pytest.fixture
def workshop_kdoc():
    return fixtures.workshop_kdoc()


@pytest.fixture
def kitchen_capture():
    return fixtures.kitchen_capture()


@pytest.fixture
def kitchen_config():
    return fixtures.kitchen_config()


@pytest.fixture
def fixture_kdocs():
    return fixtures.fixture_kdocs()
