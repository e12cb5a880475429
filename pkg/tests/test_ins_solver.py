"""Tests for advection, the saddle-point solve and time integration."""

import pytest
import numpy as np

from ibfsi.coupling import ImmersedStructure
from ibfsi.elasticity import RigidPenalty
from ibfsi.exceptions import CFLViolation
from ibfsi.fem_mesh import Configuration, assemble_mass
from ibfsi.ins_solver import (
    FluidParams,
    FluidStructureIntegrator,
    SaddlePointSolver,
    advect,
    solve_saddle,
)
from ibfsi.mac_grid import BoundaryCondition, GridSpec, MacGrid, StaggeredField


def _taylor_green(grid, amplitude=1.0):
    return grid.sample(
        lambda x, y: amplitude * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y),
        lambda x, y: -amplitude * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y),
    )


def _walled_channel(n):
    wall = BoundaryCondition.velocity(0.0, 0.0)
    bc = {"left": BoundaryCondition.periodic(), "right": BoundaryCondition.periodic(), "bottom": wall, "top": wall}
    return MacGrid(GridSpec(n, n, 1.0 / n, (0.0, 0.0), bc))


def test_invalid_solver_parameters(periodic_grid):
    """Test rejection of non-positive time steps and loose tolerances."""
    params = FluidParams()
    with pytest.raises(ValueError):
        SaddlePointSolver(periodic_grid, params, 0.0)
    with pytest.raises(ValueError):
        SaddlePointSolver(periodic_grid, params, 0.01, tol=1e-3)
    with pytest.raises(ValueError):
        FluidParams(rho=0.0)


def test_fourier_solve_is_divergence_free(periodic_grid, rng):
    """Test the exact periodic solve on a random right-hand side."""
    u0 = periodic_grid.field_from_vector(rng.standard_normal(periodic_grid.n_faces))

    u, p, report = solve_saddle(u0, periodic_grid, FluidParams(1.0, 0.01), 0.01)

    assert report.method == "fourier"
    assert np.max(np.abs(periodic_grid.divergence(u).values)) <= 1e-10
    assert report.residual <= 1e-12
    assert abs(p.values.mean()) <= 1e-12


def test_krylov_solve_on_cavity(cavity_grid):
    """Test the preconditioned GMRES solve with a moving lid."""
    u, p, report = solve_saddle(StaggeredField.zeros(cavity_grid.spec), cavity_grid, FluidParams(1.0, 0.01), 0.01)

    assert report.method == "gmres"
    assert report.residual <= 1e-9
    assert report.divergence <= 1e-6
    assert abs(p.values.mean()) <= 1e-10
    assert u.u1[1:-1, -1].min() > 0.0
    assert np.all(u.u1[0] == 0.0) and np.all(u.u2[:, -1] == 0.0)


def test_uniform_flow_has_no_advection(periodic_grid):
    """Test that a constant velocity is not self-advected."""
    u = periodic_grid.sample(lambda x, y: np.full_like(x, 1.0), lambda x, y: np.full_like(x, -0.5))

    assert advect(u, periodic_grid).max_abs() <= 1e-12


def test_advection_converges():
    """Test u ∂u/∂x for u = sin(2πx) against the exact π sin(4πx) at h = 1/64, 1/128, 1/256."""
    errors = []
    for n in (64, 128, 256):
        grid = MacGrid(GridSpec.periodic_box(n, n, 1.0 / n))
        u = grid.sample(lambda x, y: np.sin(2 * np.pi * x), lambda x, y: np.zeros_like(x))
        exact = grid.sample(lambda x, y: np.pi * np.sin(4 * np.pi * x), lambda x, y: np.zeros_like(x))
        errors.append((advect(u, grid) - exact).max_abs())

    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert errors[0] < 1e-3
    assert np.all(orders >= 2.0)


def test_linear_flow_is_advected_exactly():
    """Test that u = (x, -y) gives the advective term (x, y) away from the walls."""
    wall = BoundaryCondition.velocity(0.0, 0.0)
    bc = {side: wall for side in ("left", "right", "bottom", "top")}
    grid = MacGrid(GridSpec(32, 32, 1.0 / 32, (-0.5, -0.5), bc))
    u = grid.sample(lambda x, y: x, lambda x, y: -y)
    exact = grid.sample(lambda x, y: x, lambda x, y: y)

    term = advect(u, grid)

    interior = (slice(6, -6), slice(6, -6))
    assert np.allclose(term.u1[interior], exact.u1[interior], rtol=0.0, atol=1e-12)
    assert np.allclose(term.u2[interior], exact.u2[interior], rtol=0.0, atol=1e-12)


def test_advection_vanishes_on_prescribed_faces(cavity_grid, rng):
    """Test that boundary faces carry no advective term."""
    u = cavity_grid.from_dofs(rng.standard_normal(int(cavity_grid.unknown_mask.sum())))
    vector = cavity_grid.full_vector(advect(u, cavity_grid))

    assert np.all(vector[~cavity_grid.unknown_mask] == 0.0)


def test_taylor_green_energy_decay():
    """Test viscous decay of the Taylor-Green vortex, E(t) = E0 exp(-16π² ν t), with Δt = h/4."""
    grid = MacGrid(GridSpec.periodic_box(64, 64, 1.0 / 64))
    params = FluidParams(1.0, 0.01)
    integrator = FluidStructureIntegrator(grid, params, grid.h / 4)
    state = integrator.initial_state(_taylor_green(grid))
    e0 = grid.kinetic_energy(state.u)

    state = integrator.advance(state, 0.1)

    assert state.step == 26
    expected = np.exp(-16 * np.pi**2 * 0.01 * state.t)
    assert grid.kinetic_energy(state.u) / e0 == pytest.approx(expected, rel=5e-3)
    assert np.max(np.abs(grid.divergence(state.u).values)) <= 1e-9


def test_poiseuille_flow():
    """Test that the parabolic channel profile is held by a uniform body force."""
    n, mu, g = 16, 1.0, 8.0
    grid = _walled_channel(n)

    def profile(x, y):
        return 0.5 * g / mu * y * (1.0 - y)

    exact = grid.sample(profile, lambda x, y: np.zeros_like(x))
    body = grid.sample(lambda x, y: np.full_like(x, g), lambda x, y: np.zeros_like(x))
    integrator = FluidStructureIntegrator(grid, FluidParams(1.0, mu), 0.01, body_force=body)

    state = integrator.advance(integrator.initial_state(exact), 0.1)

    assert (state.u - exact).max_abs() <= 2.0 * (0.5 * g / mu) * grid.h**2
    assert np.allclose(state.u.u2, 0.0, atol=1e-8)


def test_cfl_violation(periodic_grid):
    """Test that fast flows stop the integration."""
    integrator = FluidStructureIntegrator(periodic_grid, FluidParams(), 0.1)
    u = periodic_grid.sample(lambda x, y: np.full_like(x, 1.0), lambda x, y: np.zeros_like(x))

    with pytest.raises(CFLViolation):
        integrator.step(integrator.initial_state(u))


def test_step_count(periodic_grid):
    """Test the number of fixed steps to reach an end time."""
    integrator = FluidStructureIntegrator(periodic_grid, FluidParams(), 0.005)

    assert integrator.n_steps(0.1) == 20
    assert integrator.n_steps(0.1, t_start=0.1) == 0


def test_tethered_body_in_quiescent_fluid(disc_mesh, periodic_grid):
    """Test that a body at its anchor in fluid at rest stays at rest."""
    config = Configuration.identity(disc_mesh)
    structure = ImmersedStructure(
        disc_mesh,
        config,
        periodic_grid,
        assemble_mass(disc_mesh),
        penalty=RigidPenalty.default(disc_mesh.nodes.copy(), rho=1.0, h=periodic_grid.h, dt=0.01),
    )
    integrator = FluidStructureIntegrator(periodic_grid, FluidParams(1.0, 0.01), 0.01, structure=structure)

    state = integrator.initial_state()
    for _ in range(3):
        state = integrator.step(state)

    assert state.u.max_abs() <= 1e-12
    assert np.allclose(state.config.chi, disc_mesh.nodes, atol=1e-12)
    assert np.allclose(state.net_force, 0.0, atol=1e-12)
