"""Tests for plain-text field and mesh dumps."""

import pytest
import numpy as np

from ibfsi.dumps import read_field, read_mesh, write_field, write_fields, write_mesh
from ibfsi.fem_mesh import ElementKind


def test_field_dump_layout(tmp_path):
    """Test the header line and row-major value order."""
    values = np.arange(6, dtype=float).reshape(2, 3) / 3.0
    path = write_field(tmp_path / "u1.txt", "u1", values, 0.125)

    lines = path.read_text().splitlines()
    assert lines[0] == "field u1 n1 2 n2 3 h 0.125"
    assert len(lines) == 7
    assert float(lines[2]) == values[0, 1]

    name, read, h = read_field(path)
    assert name == "u1" and h == 0.125
    assert np.array_equal(read, values)


def test_field_dump_rejects_bad_input(tmp_path):
    """Test shape checks on writing and header checks on reading."""
    with pytest.raises(ValueError):
        write_field(tmp_path / "bad.txt", "p", np.zeros(4), 0.1)

    (tmp_path / "other.txt").write_text("hello\n1\n")
    with pytest.raises(ValueError):
        read_field(tmp_path / "other.txt")


def test_truncated_field_dump(tmp_path):
    """Test that a dump with missing values is refused."""
    (tmp_path / "short.txt").write_text("field p n1 2 n2 2 h 0.5\n1\n2\n3\n")

    with pytest.raises(ValueError):
        read_field(tmp_path / "short.txt")


def test_write_fields(tmp_path, cavity_grid, rng):
    """Test that velocity components and pressure land in one directory."""
    u1 = rng.standard_normal(cavity_grid.spec.component_shape(0))
    u2 = rng.standard_normal(cavity_grid.spec.component_shape(1))
    p = rng.standard_normal(cavity_grid.spec.cells)

    directory = write_fields(tmp_path / "fields", cavity_grid.spec, u1, u2, p)

    assert sorted(f.name for f in directory.iterdir()) == ["p.txt", "u1.txt", "u2.txt"]
    _, read_u1, _ = read_field(directory / "u1.txt")
    assert read_u1.shape == (17, 16)
    assert np.array_equal(read_u1, u1)


def test_mesh_dump(tmp_path, rectangle_mesh):
    """Test mesh header, deformed positions and connectivity."""
    chi = rectangle_mesh.nodes * 1.5
    path = write_mesh(tmp_path / "mesh.txt", rectangle_mesh, chi)

    assert path.read_text().splitlines()[0] == "mesh q1 nodes 35 elements 24"
    kind, positions, elements = read_mesh(path)
    assert kind is ElementKind.Q1_QUAD
    assert np.array_equal(positions, chi)
    assert np.array_equal(elements, rectangle_mesh.elements)


def test_mesh_dump_shape_check(tmp_path, rectangle_mesh):
    """Test that positions must match the mesh nodes."""
    with pytest.raises(ValueError):
        write_mesh(tmp_path / "mesh.txt", rectangle_mesh, np.zeros((3, 2)))
