from __future__ import annotations

import math

import numpy as np
import pytest

from kshopf.nbody_reg import BodySet

PYTHAGOREAN = BodySet([3.0, 4.0, 5.0],
                      [[1.0, 3.0, 0.0], [-2.0, -1.0, 0.0], [1.0, -1.0, 0.0]],
                      np.zeros((3, 3)))

FOUR_BODY = BodySet([5.0, 5.0, 3.0, 3.0],
                    [[0.6245, 0.6207, 0.0], [0.6245, -0.6207, 0.0],
                     [3.0, 3.0, 3.0], [-5.0817, -3.0, -3.0]],
                    [[-0.7873, 0.0200, -0.0100], [0.7873, 0.0200, 0.0100],
                     [-0.3, -0.3, -0.3], [0.3, 0.2333, 0.3]])


def two_body(m1=1.0, m2=1.0, d=1.0, speed_factor=1.0, incline=0.0):
    """Two bodies a distance ``d`` apart on the x axis, circular when speed_factor = 1."""
    v = speed_factor * math.sqrt((m1 + m2) / d)
    mt = m1 + m2
    dirn = np.array([0.0, math.cos(incline), math.sin(incline)])
    return BodySet([m1, m2], [[m2 / mt * d, 0, 0], [-m1 / mt * d, 0, 0]],
                   [m2 / mt * v * dirn, -m1 / mt * v * dirn])


@pytest.fixture
def pythagorean():
    return BodySet(PYTHAGOREAN.masses, PYTHAGOREAN.positions, PYTHAGOREAN.velocities)


@pytest.fixture
def four_body():
    return BodySet(FOUR_BODY.masses, FOUR_BODY.positions, FOUR_BODY.velocities)


# acceptance criterion number -> (title, passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
