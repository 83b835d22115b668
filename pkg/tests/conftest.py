import pytest

from railplan.costmodel import RateTable, TrainConsist

from synth import grid3x3_network, line_network, two_path_network


@pytest.fixture
def consist():
    return TrainConsist()


@pytest.fixture
def rates():
    return RateTable()


@pytest.fixture
def two_path_net():
    return two_path_network()


@pytest.fixture
def line_net():
    return line_network()


@pytest.fixture
def grid3x3():
    return grid3x3_network()
