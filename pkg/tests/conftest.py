import math

import numpy as np
import pytest

from reachmap.kinematics import DHRow, Joint, JointLimits, RobotModel

UR5_DH = [
    (0.0, 0.089159, 0.0, math.pi / 2),
    (0.0, 0.0, -0.425, 0.0),
    (0.0, 0.0, -0.39225, 0.0),
    (0.0, 0.10915, 0.0, math.pi / 2),
    (0.0, 0.09465, 0.0, -math.pi / 2),
    (0.0, 0.0823, 0.0, 0.0),
]


def make_robot(dh_rows, limits=(-math.pi, math.pi), name="test", E=None):
    lim = JointLimits(*limits)
    joints = tuple(Joint(DHRow(*row), lim) for row in dh_rows)
    return RobotModel(name, joints, np.eye(4) if E is None else E)


def planar(links, limits=(-math.pi, math.pi)):
    return make_robot([(0.0, 0.0, a, 0.0) for a in links], limits, name="planar")


@pytest.fixture
def planar2r():
    return planar([0.5, 0.5])


@pytest.fixture
def ur5():
    return make_robot(UR5_DH, name="ur5")


ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> bool:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
