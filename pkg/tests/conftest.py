import random

import numpy as np
import pytest

from prk import paillier
from prk.ot import test_group


# one line per acceptance criterion, echoed after the test summary so the
# PASS/FAIL verdicts survive pytest's output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def kp1024():
    return paillier.keygen(1024, random.Random(1234), test_mode=True)


@pytest.fixture(scope="session")
def kp2048():
    return paillier.keygen(2048, random.Random(1234), test_mode=True)


@pytest.fixture(scope="session")
def ot_test_group():
    return test_group()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240901)


def unit_vector(rng, n):
    t = rng.standard_normal(n)
    return t / np.linalg.norm(t)
