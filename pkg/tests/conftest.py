import math

import pytest

from trap_rotation.bangbang import as_protocol, design_bangbang
from trap_rotation.inverse import optimize_rotation, optimize_squeezing
from trap_rotation.optcontrol import export_control, shoot

HALF_PI = math.pi / 2
OMEGA0_2MHZ = 2 * math.pi * 2e6


@pytest.fixture(scope="session")
def oc_unbounded():
    return shoot(HALF_PI, bounded=False)


@pytest.fixture(scope="session")
def oc_bounded():
    return shoot(HALF_PI, bounded=True)


@pytest.fixture(scope="session")
def bangbang_protocol():
    return as_protocol(design_bangbang(HALF_PI))


@pytest.fixture(scope="session")
def inverse_025():
    # t_f = 0.25 us at 2 MHz
    return optimize_rotation(HALF_PI, 0.25e-6 * OMEGA0_2MHZ)


@pytest.fixture(scope="session")
def inverse_030():
    return optimize_rotation(HALF_PI, 0.30e-6 * OMEGA0_2MHZ)


@pytest.fixture(scope="session")
def squeeze_design():
    return optimize_squeezing(HALF_PI, 2.2, math.sqrt(3))


ACCEPTANCE_LINES = []


def report_criterion(label: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
