import numpy as np
import pytest

from gempic_hp1 import Grid3, pp_coefficients

_ACCEPTANCE = []


def record_criterion(number, title, passed, detail=""):
    _ACCEPTANCE.append((number, title, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_ACCEPTANCE, key=lambda t: t[0]):
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        terminalreporter.write_line(f"[{status}] AC{number:>2} {title}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_grid():
    return Grid3.from_lengths((8, 4, 4), (1.0, 1.0, 1.0))


@pytest.fixture
def cubic_bases():
    return pp_coefficients(3), pp_coefficients(2)
