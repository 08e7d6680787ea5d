from __future__ import annotations

import pytest

import harness


@pytest.fixture(scope="session")
def keys():
    return harness.make_keys()


@pytest.fixture(scope="session")
def directory(keys):
    return harness.make_directory(keys)


@pytest.fixture
def actors():
    return harness.build_actors()
