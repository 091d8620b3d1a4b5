import numpy as np
import pytest
from hypothesis import settings

from handforce.config import load_scenario
from handforce.grasp import FrictionParams, GraspState
from handforce.hand_model import load_hand
from handforce.harness import run_scenario

settings.register_profile("handforce", deadline=None, max_examples=100, derandomize=True)
settings.load_profile("handforce")


@pytest.fixture(scope="session")
def hand():
    return load_hand("leap4")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def side_grasp(mass=0.053, radius=0.03, heights=(0.01, -0.01, 0.01, -0.01)):
    """Four contacts around a vertical cylinder at 0/90/180/270 degrees."""
    ang = np.radians([0, 90, 180, 270])
    normals = np.column_stack([np.cos(ang), np.sin(ang), np.zeros(4)])
    center = np.array([0.0, 0.0, 0.1])
    points = center + radius * normals + np.column_stack([np.zeros((4, 2)), heights])
    return GraspState(points, normals, center, mass=mass)


@pytest.fixture
def cup_grasp():
    return side_grasp()


@pytest.fixture
def cup_friction():
    return FrictionParams(mu=0.65, f_n_min=0.1, f_n_max=0.6)


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


class _RunCache:
    """Each bundled scenario is run at most once per test session."""

    def __init__(self):
        self._logs = {}

    def __call__(self, name, **overrides):
        key = (name, tuple(sorted(overrides.items())))
        if key not in self._logs:
            self._logs[key] = run_scenario(load_scenario(name, overrides))
        return self._logs[key]


@pytest.fixture(scope="session")
def scenario_run():
    return _RunCache()


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def check(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
