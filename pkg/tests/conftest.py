import numpy as np
import pytest

from wordopt.core import BINARY, Alphabet, HammingMove, Problem
from wordopt.problems import OneMax, RandomTable


def onemax_problem(n=16, alphabet=BINARY):
    return Problem("onemax", alphabet, n, OneMax(alphabet, n), HammingMove(alphabet))


def table_problem(seed, n=10):
    table = RandomTable(BINARY, n, seed=seed)
    return Problem("table", BINARY, n, table, HammingMove(BINARY)), table


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quad():
    return Alphabet(("A", "B", "C", "D"))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
