"""Tests for interaction rules, spreading and velocity restriction."""

import logging

import pytest
import numpy as np

from ibfsi.coupling import (
    MAX_INTERACTION_ORDER,
    ImmersedStructure,
    SpreadOperator,
    build_boundary_interaction_rule,
    build_interaction_rule,
    interaction_order,
    restrict_velocity,
    spread_nodal,
    spread_operator,
    spread_volume,
)
from ibfsi.elasticity import ConstitutiveModel, Formulation, LagrangianForce, RigidPenalty
from ibfsi.exceptions import InteractionRuleError
from ibfsi.fem_mesh import Configuration, assemble_mass, build_circle_mesh, lagrangian_inner_product
from ibfsi.kernels import KernelKind


def _perturbed(mesh, rng, scale=0.01):
    return Configuration.at(mesh.nodes + scale * rng.standard_normal(mesh.nodes.shape))


def test_interaction_order():
    """Test points per direction from the deformed extent, with a floor of two."""
    h = 0.1
    orders = interaction_order(np.array([4 * h, 0.01 * h, 0.5 * h]), h, 3.0)

    assert list(orders) == [12, 2, 2]


def test_rule_weights_cover_reference_area(disc_mesh, periodic_grid):
    """Test that interaction weights integrate one exactly over the reference disc."""
    mass = assemble_mass(disc_mesh)
    rule = build_interaction_rule(disc_mesh, Configuration.identity(disc_mesh), periodic_grid.h)

    assert rule.weights.sum() == pytest.approx(mass.matrix.sum(), rel=1e-12)
    assert np.all(rule.orders >= 2)
    assert rule.basis.shape == (rule.n_points, disc_mesh.n_nodes)
    assert np.allclose(np.asarray(rule.basis.sum(axis=1)).ravel(), 1.0)


def test_rule_order_cap(disc_mesh):
    """Test that excessive point densities are refused."""
    config = Configuration.identity(disc_mesh)

    with pytest.raises(InteractionRuleError):
        build_interaction_rule(disc_mesh, config, 1.0 / 32, density=50.0 * MAX_INTERACTION_ORDER)


def test_rule_rebuild_threshold(disc_mesh, periodic_grid):
    """Test that stretching beyond the threshold requests a rebuild."""
    config = Configuration.identity(disc_mesh)
    rule = build_interaction_rule(disc_mesh, config, periodic_grid.h, rebuild_threshold=0.1)
    center = np.array([0.5, 0.5])

    assert not rule.needs_rebuild(config.chi, disc_mesh.elements)
    assert not rule.needs_rebuild(center + 1.05 * (config.chi - center), disc_mesh.elements)
    assert rule.needs_rebuild(center + 1.5 * (config.chi - center), disc_mesh.elements)


@pytest.mark.parametrize("body", ["disc", "shell"])
@pytest.mark.parametrize("kernel", list(KernelKind))
def test_spread_interpolate_adjoint(kernel, body, request, periodic_grid, rng):
    """Test (F, J u)_X = (S F, u)_x with J u taken before the mass solve."""
    if body == "disc":
        mesh = request.getfixturevalue("disc_mesh")
        chi = mesh.nodes
    else:
        mesh, shell_config = request.getfixturevalue("shell")
        chi = shell_config.chi
    config = Configuration.at(chi + 0.2 * periodic_grid.h * rng.standard_normal(chi.shape))
    rule = build_interaction_rule(mesh, config, periodic_grid.h)
    operator = spread_operator(rule, config, periodic_grid, kernel)
    F = rng.standard_normal(chi.shape)
    u = periodic_grid.field_from_vector(rng.standard_normal(periodic_grid.n_faces))

    U = operator.interpolate(u)
    lhs = np.sum(F * (rule.basis.T @ (U * rule.weights[:, None])))
    rhs = periodic_grid.inner_product(spread_volume(rule, config, F, periodic_grid, kernel, operator), u)

    assert lhs == pytest.approx(rhs, rel=1e-11)


def test_restriction_adjoint_with_mass_solve(disc_mesh, periodic_grid, rng):
    """Test the adjoint identity through the Lagrangian inner product."""
    mass = assemble_mass(disc_mesh)
    config = _perturbed(disc_mesh, rng)
    rule = build_interaction_rule(disc_mesh, config, periodic_grid.h)
    F = rng.standard_normal(disc_mesh.nodes.shape)
    u = periodic_grid.field_from_vector(rng.standard_normal(periodic_grid.n_faces))
    kernel = KernelKind.PESKIN_4PT

    lhs = lagrangian_inner_product(mass, F, restrict_velocity(rule, config, u, mass, periodic_grid, kernel))
    rhs = periodic_grid.inner_product(spread_volume(rule, config, F, periodic_grid, kernel), u)

    assert lhs == pytest.approx(rhs, rel=1e-8)


@pytest.mark.parametrize("kernel", list(KernelKind))
def test_spreading_conserves_total_force(kernel, disc_mesh, periodic_grid, rng):
    """Test Σ f h² = Σ_Q F ω_Q on a periodic grid."""
    config = _perturbed(disc_mesh, rng)
    rule = build_interaction_rule(disc_mesh, config, periodic_grid.h)
    F = rng.standard_normal(disc_mesh.nodes.shape)

    f = spread_volume(rule, config, F, periodic_grid, kernel)
    expected = (rule.weights[:, None] * (rule.values @ F)).sum(axis=0)
    h2 = periodic_grid.h**2

    assert f.u1.sum() * h2 == pytest.approx(expected[0], rel=1e-12, abs=1e-12)
    assert f.u2.sum() * h2 == pytest.approx(expected[1], rel=1e-12, abs=1e-12)


def test_interpolating_uniform_flow(disc_mesh, periodic_grid):
    """Test that a uniform velocity is interpolated and restricted exactly."""
    config = Configuration.identity(disc_mesh)
    rule = build_interaction_rule(disc_mesh, config, periodic_grid.h)
    u = periodic_grid.sample(lambda x, y: np.full_like(x, 1.0), lambda x, y: np.full_like(x, -2.0))
    mass = assemble_mass(disc_mesh)

    U = spread_operator(rule, config, periodic_grid, KernelKind.PESKIN_4PT).interpolate(u)
    nodal = restrict_velocity(rule, config, u, mass, periodic_grid, KernelKind.PESKIN_4PT)

    assert np.allclose(U, [1.0, -2.0])
    assert np.allclose(nodal, [1.0, -2.0], atol=1e-9)


def test_nodal_spreading_matches_total(disc_mesh, periodic_grid, rng):
    """Test that nodal and quadrature spreading carry the same total force."""
    mass = assemble_mass(disc_mesh)
    config = Configuration.identity(disc_mesh)
    rule = build_interaction_rule(disc_mesh, config, periodic_grid.h)
    F = rng.standard_normal(disc_mesh.nodes.shape)

    nodal = spread_nodal(disc_mesh, config, F, mass, periodic_grid, KernelKind.PESKIN_4PT)
    quadrature = spread_volume(rule, config, F, periodic_grid, KernelKind.PESKIN_4PT)

    assert nodal.u1.sum() == pytest.approx(quadrature.u1.sum(), rel=1e-10, abs=1e-8)
    assert nodal.u2.sum() == pytest.approx(quadrature.u2.sum(), rel=1e-10, abs=1e-8)


def test_points_outside_wall_domain(cavity_grid):
    """Test that interaction points outside a walled domain are refused."""
    with pytest.raises(InteractionRuleError):
        SpreadOperator(cavity_grid, np.array([[1.5, 0.5]]), KernelKind.PESKIN_4PT)


def test_boundary_rule_covers_perimeter(rectangle_mesh, periodic_grid):
    """Test that boundary interaction weights sum to the reference perimeter."""
    rule = build_boundary_interaction_rule(rectangle_mesh, Configuration.identity(rectangle_mesh), periodic_grid.h)

    assert rule.is_surface
    assert rule.weights.sum() == pytest.approx(1.0)
    assert np.allclose(np.asarray(rule.values.sum(axis=1)).ravel(), 1.0)


def test_structure_requires_one_force_model(disc_mesh, periodic_grid):
    """Test that a body has either a material or a penalty, not both or neither."""
    mass = assemble_mass(disc_mesh)
    config = Configuration.identity(disc_mesh)

    with pytest.raises(ValueError):
        ImmersedStructure(disc_mesh, config, periodic_grid, mass)
    with pytest.raises(ValueError):
        ImmersedStructure(
            disc_mesh,
            config,
            periodic_grid,
            mass,
            model=ConstitutiveModel.neo_hookean_disc(0.2),
            penalty=RigidPenalty(1.0, 0.0, disc_mesh.nodes),
        )


def test_structure_rebuilds_rules(disc_mesh, periodic_grid, caplog):
    """Test that stretching a structure rebuilds its rules and logs it."""
    structure = ImmersedStructure(
        disc_mesh,
        Configuration.identity(disc_mesh),
        periodic_grid,
        assemble_mass(disc_mesh),
        model=ConstitutiveModel.neo_hookean_disc(0.2, 0.2),
        formulation=Formulation.PARTITIONED,
    )
    assert structure.rebuilds == 1
    assert structure.boundary_rule is not None

    stretched = 0.5 + 1.5 * (disc_mesh.nodes - 0.5)
    with caplog.at_level(logging.INFO, logger="ibfsi.coupling"):
        structure.at(stretched)

    assert structure.rebuilds == 2
    assert "Rebuilt interaction rules" in caplog.text


def test_penalty_net_force_on_circle(periodic_grid):
    """Test the net force of a uniform penalty density over a circle."""
    mesh = build_circle_mesh(0.25, (0.5, 0.5), 1.0 / 32)
    structure = ImmersedStructure(
        mesh,
        Configuration.identity(mesh),
        periodic_grid,
        assemble_mass(mesh),
        penalty=RigidPenalty(1.0, 0.0, mesh.nodes.copy()),
    )
    state = structure.at(mesh.nodes)
    force = LagrangianForce(F=np.tile([1.0, 0.0], (mesh.n_nodes, 1)))

    assert np.allclose(state.net_force(force), [2 * np.pi * 0.25, 0.0], rtol=1e-3, atol=1e-12)
    assert np.allclose(structure.force(mesh.nodes).F, 0.0)
