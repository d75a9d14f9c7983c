import numpy as np
import pytest

from qmemc.generator import Generator


def make_coin() -> Generator:
    return Generator.from_edges(["s0"], ["0", "1"], [("s0", "0", "s0", 0.5), ("s0", "1", "s0", 0.5)], name="coin")


def make_alternator() -> Generator:
    return Generator.from_edges(["A", "B"], ["0", "1"], [("A", "1", "B", 1.0), ("B", "0", "A", 1.0)], name="alternator")


@pytest.fixture
def coin() -> Generator:
    return make_coin()


@pytest.fixture
def alternator() -> Generator:
    return make_alternator()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
