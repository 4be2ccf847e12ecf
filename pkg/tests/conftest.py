import math

import numpy as np
import pytest

from dynlagrange.duality import DualField
from dynlagrange.market import MarketModel
from dynlagrange.utility import (PiecewiseUtility, Segment, example_utility, log_utility,
                                 reward_jump_utility)

ACCEPTANCE_LINES = []


def reference_market() -> MarketModel:
    return MarketModel(r=0.05, mu=np.array([0.086]), sigma=np.array([[0.3]]), T=10.0)


@pytest.fixture(scope="session")
def market():
    return reference_market()


@pytest.fixture(scope="session")
def example_field(market):
    return DualField.from_parts(market, example_utility())


@pytest.fixture(scope="session")
def log_field(market):
    return DualField.from_parts(market, log_utility())


@pytest.fixture(scope="session")
def desk_field(market):
    return DualField.from_parts(market, reward_jump_utility())


@pytest.fixture(scope="session")
def floor_field(market):
    """Log utility on [1, inf): a positive wealth floor, so L_hat = L = 1."""
    u = PiecewiseUtility(1.0, [Segment("log_shifted", 1.0, a=0.0, b=1.0, c=0.0)])
    return DualField.from_parts(market, u)


@pytest.fixture(scope="session")
def negative_floor_field(market):
    """``log(x + 2)`` on [-1, inf): negative floor, so L_hat = L e^{-rT}."""
    u = PiecewiseUtility(-1.0, [Segment("log_shifted", -1.0, a=0.0, b=1.0, c=-2.0)])
    return DualField.from_parts(market, u)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
