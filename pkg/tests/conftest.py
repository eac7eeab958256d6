"""Shared fixtures. Ground states are expensive, so they are solved once per session."""

import warnings

import numpy as np
import pytest

from cnlslab.domain import ModelParams, build_grid, harmonic_ground
from cnlslab.groundstate import default_init, minimize_action


@pytest.fixture(scope="session")
def grid2():
    return build_grid(2, 128, 8.0)


@pytest.fixture(scope="session")
def grid2_fine():
    return build_grid(2, 256, 8.0)


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(2, 64, 8.0)


@pytest.fixture(scope="session")
def params_p2():
    return ModelParams.uniform(2, 1, 2.0)


@pytest.fixture(scope="session")
def params_p3():
    return ModelParams.uniform(2, 1, 3.0)


@pytest.fixture(scope="session")
def phi0(grid2):
    return harmonic_ground(grid2)


@pytest.fixture(scope="session")
def gs_p2(grid2, params_p2):
    """Nehari ground state, d=2, p=2 (outside the strict existence range, so warnings are muted)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return minimize_action(default_init(grid2), params_p2)


@pytest.fixture(scope="session")
def gs_p3(grid2_fine, params_p3):
    """Nehari ground state, d=2, p=3; needs n=256 to resolve the narrower profile."""
    return minimize_action(default_init(grid2_fine), params_p3)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def l2(x, grid):
    return float(np.sqrt(grid.integrate(np.abs(x) ** 2).sum()))
