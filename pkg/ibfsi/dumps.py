"""Plain-text field and mesh dumps."""

import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .fem_mesh import ElementKind, FeMesh
from .mac_grid import GridSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def write_field(path: PathLike, name: str, values: np.ndarray, h: float) -> Path:
    """Write one grid array.

    The header is ``field <name> n1 <n1> n2 <n2> h <h>``; values follow one
    per line in row-major order (first index i along x1 varies slowest),
    17 significant digits.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError(f"Field dumps need a 2D array, got shape {values.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n1, n2 = values.shape
    header = f"field {name} n1 {n1} n2 {n2} h {h:.17g}"
    np.savetxt(path, values.ravel(order="C"), fmt="%.17g", header=header, comments="")
    logger.debug(f"Wrote field {name} ({n1}x{n2}) to {path}")
    return path


def read_field(path: PathLike) -> Tuple[str, np.ndarray, float]:
    """Read a dump written by :func:`write_field`; returns (name, values, h)."""
    path = Path(path)
    with open(path) as f:
        tokens = f.readline().split()
    if len(tokens) != 8 or tokens[0] != "field" or tokens[2] != "n1" or tokens[4] != "n2" or tokens[6] != "h":
        raise ValueError(f"{path} is not a field dump")
    n1, n2, h = int(tokens[3]), int(tokens[5]), float(tokens[7])
    values = np.loadtxt(path, skiprows=1, ndmin=1)
    if values.size != n1 * n2:
        raise ValueError(f"{path}: expected {n1 * n2} values, found {values.size}")
    return tokens[1], values.reshape(n1, n2), h


def write_fields(directory: PathLike, spec: GridSpec, u1: np.ndarray, u2: np.ndarray, p: Optional[np.ndarray]) -> Path:
    directory = Path(directory)
    write_field(directory / "u1.txt", "u1", u1, spec.h)
    write_field(directory / "u2.txt", "u2", u2, spec.h)
    if p is not None:
        write_field(directory / "p.txt", "p", p, spec.h)
    return directory


def write_mesh(path: PathLike, mesh: FeMesh, chi: Optional[np.ndarray] = None) -> Path:
    """Write node positions (``chi`` if given) and connectivity.

    Header ``mesh <kind> nodes <n> elements <ne>``, then one ``x y`` line per
    node and one line of node ids per element.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    positions = mesh.nodes if chi is None else np.asarray(chi, dtype=float)
    if positions.shape != mesh.nodes.shape:
        raise ValueError(f"Positions of shape {positions.shape} do not match {mesh.n_nodes} mesh nodes")
    with open(path, "w") as f:
        f.write(f"mesh {mesh.kind.value} nodes {mesh.n_nodes} elements {mesh.n_elements}\n")
        np.savetxt(f, positions, fmt="%.17g")
        np.savetxt(f, mesh.elements, fmt="%d")
    logger.debug(f"Wrote {mesh.kind.value} mesh to {path}")
    return path


def read_mesh(path: PathLike) -> Tuple[ElementKind, np.ndarray, np.ndarray]:
    """Read a mesh dump; returns (kind, positions, elements)."""
    path = Path(path)
    with open(path) as f:
        tokens = f.readline().split()
        if len(tokens) != 6 or tokens[0] != "mesh":
            raise ValueError(f"{path} is not a mesh dump")
        kind, n, ne = ElementKind(tokens[1]), int(tokens[3]), int(tokens[5])
        lines = f.read().splitlines()
    positions = np.loadtxt(lines[:n], ndmin=2)
    elements = np.loadtxt(lines[n : n + ne], dtype=np.int64, ndmin=2)
    return kind, positions, elements
