"""Pytest fixtures for immersed-boundary tests."""

import pytest
import numpy as np

from ibfsi.fem_mesh import build_disc_mesh, build_rectangle_mesh, build_shell_mesh
from ibfsi.mac_grid import BoundaryCondition, GridSpec, MacGrid


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(42)


@pytest.fixture
def periodic_grid():
    """Doubly periodic 32x32 grid on the unit square."""
    return MacGrid(GridSpec.periodic_box(32, 32, 1.0 / 32))


@pytest.fixture
def cavity_grid():
    """16x16 lid-driven cavity: no-slip walls, top lid moving at (1, 0)."""
    wall = BoundaryCondition.velocity(0.0, 0.0)
    bc = {"left": wall, "right": wall, "bottom": wall, "top": BoundaryCondition.velocity(1.0, 0.0)}
    return MacGrid(GridSpec(16, 16, 1.0 / 16, (0.0, 0.0), bc))


@pytest.fixture
def channel_grid():
    """Inflow on the left, outflow on the right, slip top and bottom."""
    bc = {
        "left": BoundaryCondition.velocity(1.0, 0.0),
        "right": BoundaryCondition.outflow(),
        "bottom": BoundaryCondition.slip(),
        "top": BoundaryCondition.slip(),
    }
    return MacGrid(GridSpec(16, 8, 1.0 / 8, (0.0, 0.0), bc))


@pytest.fixture
def disc_mesh():
    """P2 disc of radius 0.2 centered in the unit square."""
    return build_disc_mesh(0.2, (0.5, 0.5), 1.0 / 16)


@pytest.fixture
def rectangle_mesh():
    """Small Q1 block away from the domain edges."""
    return build_rectangle_mesh(0.3, 0.2, 6, 4, (0.1, 0.2))


@pytest.fixture
def shell():
    """Circular shell with two elements through the thickness: (mesh, configuration)."""
    return build_shell_mesh(0.25, 0.0625, 2)
