from fractions import Fraction

import pytest

from gsdiv import configfile
from gsdiv.fixedpoint import FixedPoint


@pytest.fixture(scope="session")
def toy():
    return configfile.preset("toy")


@pytest.fixture(scope="session")
def toy_table(toy):
    return toy.build_table()


@pytest.fixture(scope="session")
def twostage():
    return configfile.preset("twostage")


@pytest.fixture(scope="session")
def twostage_table(twostage):
    return twostage.build_table()


@pytest.fixture(scope="session")
def threestage():
    return configfile.preset("threestage")


def all_mantissas(frac_bits):
    return [FixedPoint((1 << frac_bits) | m, 1, frac_bits) for m in range(1 << frac_bits)]


def fp(value, int_bits=1, frac_bits=8):
    return FixedPoint.from_value(Fraction(value), int_bits, frac_bits)


# Acceptance lines collected by test_acceptance.py and echoed after the run.
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
