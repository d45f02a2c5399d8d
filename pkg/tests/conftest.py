import math

import pytest

from eealloc.model import PowerModel, Scenario, UserChannel

E = math.e
LOG2E = 1.0 / math.log(2.0)


def fixed_scenario(gains, floors, bandwidths, P=100.0, W=None, zeta=1.0, pc=0.0):
    users = tuple(UserChannel(g, r, w) for g, r, w in zip(gains, floors, bandwidths))
    return Scenario(users, W if W is not None else float(sum(bandwidths)), P, PowerModel(zeta, pc))


def joint_scenario(gains, floors, W, P=100.0, zeta=1.0, pc=0.0):
    users = tuple(UserChannel(g, r) for g, r in zip(gains, floors))
    return Scenario(users, W, P, PowerModel(zeta, pc))


@pytest.fixture
def single_user():
    # w = g = 1, no floor, zeta = P_C = 1: optimum at e - 1
    return fixed_scenario([1.0], [0.0], [1.0], P=10.0, zeta=1.0, pc=1.0)


@pytest.fixture
def two_user_unequal():
    return fixed_scenario([2.0, 1.0], [0.0, 0.0], [1.0, 1.0])


# acceptance results collected by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
