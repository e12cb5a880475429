"""Tests for the staggered grid and its operators."""

import pytest
import numpy as np
import xarray as xr

from ibfsi.mac_grid import BoundaryCondition, CellField, GridSpec, MacGrid, StaggeredField


def test_grid_spec_validation():
    """Test rejection of bad spacing, tiny grids and unpaired periodic sides."""
    with pytest.raises(ValueError):
        GridSpec.periodic_box(8, 8, 0.0)
    with pytest.raises(ValueError):
        GridSpec.periodic_box(3, 8, 0.1)

    bc = {side: BoundaryCondition.periodic() for side in ("left", "right", "bottom", "top")}
    bc["right"] = BoundaryCondition.velocity()
    with pytest.raises(ValueError):
        GridSpec(8, 8, 0.1, (0.0, 0.0), bc)


def test_component_shapes(periodic_grid, cavity_grid):
    """Test storage shapes for periodic and walled directions."""
    assert periodic_grid.spec.component_shape(0) == (32, 32)
    assert periodic_grid.spec.component_shape(1) == (32, 32)
    assert cavity_grid.spec.component_shape(0) == (17, 16)
    assert cavity_grid.spec.component_shape(1) == (16, 17)
    assert cavity_grid.n_faces == 2 * 17 * 16


def test_face_coordinates(cavity_grid):
    """Test the physical locations of faces and cells."""
    x1, y1 = cavity_grid.face_coordinates(0)
    x2, y2 = cavity_grid.face_coordinates(1)
    xc, yc = cavity_grid.cell_coordinates()
    h = cavity_grid.h

    assert x1[0, 0] == 0.0 and y1[0, 0] == pytest.approx(0.5 * h)
    assert x2[0, 0] == pytest.approx(0.5 * h) and y2[0, 0] == 0.0
    assert xc[-1, -1] == pytest.approx(1.0 - 0.5 * h)


def test_periodic_laplacian_eigenfunction(periodic_grid):
    """Test that sine modes are exact eigenfunctions of the periodic Laplacian."""
    h = periodic_grid.h
    u = periodic_grid.sample(lambda x, y: np.sin(2 * np.pi * x), lambda x, y: np.cos(2 * np.pi * y))
    eigenvalue = -(4.0 / h**2) * np.sin(np.pi * h) ** 2

    lap = periodic_grid.laplacian(u)

    assert np.allclose(lap.u1, eigenvalue * u.u1, atol=1e-9)
    assert np.allclose(lap.u2, eigenvalue * u.u2, atol=1e-9)


def _operator_error(name, N):
    """Max-norm truncation error of one operator on a smooth periodic field."""
    grid = MacGrid(GridSpec.periodic_box(N, N, 1.0 / N))
    k = 2 * np.pi
    if name == "divergence":
        u = grid.sample(lambda x, y: np.sin(k * x) * np.cos(k * y), lambda x, y: np.cos(k * x) * np.cos(k * y))
        exact = grid.sample_cells(lambda x, y: k * np.cos(k * x) * np.cos(k * y) - k * np.cos(k * x) * np.sin(k * y))
        return np.max(np.abs(grid.divergence(u).values - exact.values))
    if name == "gradient":
        p = grid.sample_cells(lambda x, y: np.sin(k * x) * np.cos(k * y))
        exact = grid.sample(
            lambda x, y: k * np.cos(k * x) * np.cos(k * y), lambda x, y: -k * np.sin(k * x) * np.sin(k * y)
        )
        return (grid.gradient(p) - exact).max_abs()
    u = grid.sample(lambda x, y: np.sin(k * x) * np.cos(k * y), lambda x, y: np.cos(k * x) * np.sin(k * y))
    return (grid.laplacian(u) + 2 * k**2 * u).max_abs()


@pytest.mark.parametrize("name", ["divergence", "gradient", "laplacian"])
def test_operators_second_order(name):
    """Test truncation error order 2.0 ± 0.2 over h = 1/32, 1/64, 1/128."""
    errors = np.array([_operator_error(name, N) for N in (32, 64, 128)])

    orders = np.log2(errors[:-1] / errors[1:])

    assert np.allclose(orders, 2.0, atol=0.2)


def test_laplacian_sine_error_bound():
    """Test max|L u + 4π² u| <= 1.1 · 4π⁴h² for u = sin(2πx) at h = 1/64."""
    h = 1.0 / 64
    grid = MacGrid(GridSpec.periodic_box(64, 64, h))
    u = grid.sample(lambda x, y: np.sin(2 * np.pi * x), lambda x, y: np.zeros_like(x))

    error = grid.laplacian(u).u1 + 4 * np.pi**2 * u.u1

    assert np.max(np.abs(error)) <= 1.1 * 4 * np.pi**4 * h**2


@pytest.mark.parametrize("grid_name", ["periodic_grid", "cavity_grid"])
def test_gradient_is_minus_divergence_adjoint(grid_name, request, rng):
    """Test (G p, u)_x = -(p, D u) for velocities vanishing on walls."""
    grid = request.getfixturevalue(grid_name)
    p = CellField(rng.standard_normal(grid.spec.cells))
    u = grid.from_dofs(rng.standard_normal(int(grid.unknown_mask.sum())))
    if grid_name == "cavity_grid":
        u = grid.field_from_vector(np.where(grid.unknown_mask, grid.full_vector(u), 0.0))

    lhs = grid.inner_product(grid.gradient(p), u)
    rhs = -grid.cell_inner_product(p, grid.divergence(u))

    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_divergence_of_gradient_is_cell_laplacian(periodic_grid, rng):
    """Test that D G equals the cell-centered Laplacian."""
    p = CellField(rng.standard_normal(periodic_grid.spec.cells))

    assert np.allclose(
        periodic_grid.divergence(periodic_grid.gradient(p)).values, periodic_grid.cell_laplacian(p).values
    )


def test_wall_velocity_enters_laplacian(cavity_grid):
    """Test the ghost-cell closure for the moving lid."""
    h = cavity_grid.h
    lap = cavity_grid.laplacian(StaggeredField.zeros(cavity_grid.spec))

    assert np.allclose(lap.u1[1:-1, -1], 2.0 / h**2)
    assert np.allclose(lap.u1[1:-1, :-1], 0.0)
    assert np.all(lap.u1[0] == 0.0) and np.all(lap.u1[-1] == 0.0)
    assert np.allclose(lap.u2, 0.0)


def test_boundary_values_and_unknowns(channel_grid):
    """Test prescribed inflow faces and free outflow faces."""
    u = channel_grid.apply_boundary_values(StaggeredField.zeros(channel_grid.spec))
    outflow = channel_grid.face_index(0)[-1]

    assert np.all(u.u1[0] == 1.0)
    assert np.all(channel_grid.unknown_mask[outflow])
    assert not np.any(channel_grid.unknown_mask[channel_grid.face_index(0)[0]])
    assert channel_grid.has_outflow
    assert not channel_grid.dof_operators.pressure_nullspace


def test_dof_round_trip(cavity_grid, rng):
    """Test that unknown faces survive to_dofs/from_dofs and known faces take boundary data."""
    dofs = rng.standard_normal(int(cavity_grid.unknown_mask.sum()))
    u = cavity_grid.from_dofs(dofs)

    assert np.array_equal(cavity_grid.to_dofs(u), dofs)
    assert np.all(u.u1[0] == 0.0)


def test_face_weights_halve_wall_faces(cavity_grid, periodic_grid):
    """Test that only non-periodic boundary faces are half-weighted."""
    weights = cavity_grid.face_weights

    assert np.all(weights[cavity_grid.face_index(0)[0]] == 0.5)
    assert np.all(weights[cavity_grid.face_index(0)[1]] == 1.0)
    assert np.all(periodic_grid.face_weights == 1.0)


def test_kinetic_energy_of_uniform_flow(periodic_grid):
    """Test the kinetic energy of a uniform stream on the unit square."""
    u = periodic_grid.sample(lambda x, y: np.ones_like(x), lambda x, y: np.zeros_like(x))

    assert periodic_grid.kinetic_energy(u, rho=2.0) == pytest.approx(1.0)


def test_field_shape_mismatch(periodic_grid, cavity_grid):
    """Test that fields from another grid are rejected."""
    with pytest.raises(ValueError):
        periodic_grid.divergence(StaggeredField.zeros(cavity_grid.spec))
    with pytest.raises(ValueError):
        periodic_grid.field_from_vector(np.zeros(3))


def test_periodic_padding_wraps(periodic_grid, rng):
    """Test ghost layers of a periodic component."""
    q = rng.standard_normal((32, 32))
    padded = periodic_grid.pad_component(q, 0, 2)

    assert padded.shape == (36, 36)
    assert np.array_equal(padded[:2, 2:-2], q[-2:])
    assert np.array_equal(padded[2:-2, -2:], q[:, :2])


def test_to_dataset(cavity_grid):
    """Test export of grid fields as a labelled dataset."""
    u = StaggeredField.zeros(cavity_grid.spec)
    p = CellField.zeros(cavity_grid.spec)
    ds = cavity_grid.to_dataset(u, p)

    assert isinstance(ds, xr.Dataset)
    assert set(ds.data_vars) == {"u1", "u2", "p"}
    assert ds["u1"].shape == (17, 16)
    assert ds.attrs["h"] == cavity_grid.h


def test_field_arithmetic(periodic_grid):
    """Test elementwise arithmetic on staggered and cell fields."""
    u = periodic_grid.sample(lambda x, y: x, lambda x, y: y)
    v = 2.0 * u - u

    assert np.array_equal(v.u1, u.u1)
    assert (-u).max_abs() == u.max_abs()
    assert (CellField.zeros(periodic_grid.spec) + CellField(np.ones((32, 32)))).values.sum() == 32 * 32
