import math
import sys

import numpy as np
import pytest

from rabiflow.critical import solve_reduced
from rabiflow.geometry import Coupling, ProductSystem

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="session")
def nonlinear():
    """f(x) = x1 + x2 + x1 x2 - 1."""
    return ProductSystem.uncut(Coupling.pairwise([1.0, 1.0], [[0.0, 1.0], [1.0, 0.0]], -1.0))


@pytest.fixture(scope="session")
def ellipsoid():
    """f(x) = x1 + x2/2 - 1."""
    return ProductSystem.uncut(Coupling.ellipsoid([1.0, 2.0]))


@pytest.fixture(scope="session")
def single():
    """m = 1, f(x) = x - 1."""
    return ProductSystem.uncut(Coupling.linear([1.0], -1.0))


@pytest.fixture(scope="session")
def nonlinear_orbit(nonlinear):
    return solve_reduced(nonlinear, (1, 1), (0.5, 0.5))


@pytest.fixture(scope="session")
def ellipsoid_orbit(ellipsoid):
    return solve_reduced(ellipsoid, (1, 0), (0.9, 0.0))


def circle(radius, k=1, N=256, phase=0.0):
    t = np.arange(N) / N
    return radius * np.exp(2j * np.pi * (k * t + phase))


def energy_profile_loop(profile, N=256, k=1):
    """Component with H(v(t)) = profile(t) for H = pi |z|^2."""
    t = np.arange(N) / N
    return np.sqrt(profile(t) / np.pi) * np.exp(2j * np.pi * k * t)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
