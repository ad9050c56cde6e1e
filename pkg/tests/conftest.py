import pytest

from magray import scene as sc


@pytest.fixture(scope="session")
def euclidean():
    return sc.builtin_scene("euclidean")


@pytest.fixture(scope="session")
def magnetic():
    return sc.builtin_scene("magnetic")


@pytest.fixture(scope="session")
def conformal():
    return sc.builtin_scene("conformal-magnetic")


@pytest.fixture(scope="session")
def attenuated():
    return sc.builtin_scene("attenuated")


@pytest.fixture(scope="session")
def attenuated2():
    return sc.builtin_scene("attenuated2")
