"""Regularized delta functions used for spreading and interpolation."""

from enum import Enum
from typing import List, Tuple

import numpy as np


class KernelKind(str, Enum):
    """One-dimensional kernel family, keyed by its config name."""

    PIECEWISE_LINEAR_2PT = "ib2"
    SMOOTH_3PT = "ib3"
    PESKIN_4PT = "ib4"

    @property
    def support_radius(self) -> float:
        """Half-width of the support in grid cells."""
        return _SUPPORT_RADIUS[self]

    @property
    def width(self) -> int:
        """Number of grid indices touched per axis."""
        return _WIDTH[self]


_SUPPORT_RADIUS = {
    KernelKind.PIECEWISE_LINEAR_2PT: 1.0,
    KernelKind.SMOOTH_3PT: 1.5,
    KernelKind.PESKIN_4PT: 2.0,
}

_WIDTH = {
    KernelKind.PIECEWISE_LINEAR_2PT: 2,
    KernelKind.SMOOTH_3PT: 3,
    KernelKind.PESKIN_4PT: 4,
}


def _hat(a: np.ndarray) -> np.ndarray:
    return np.where(a < 1.0, 1.0 - a, 0.0)


def _roma(a: np.ndarray) -> np.ndarray:
    # Roma, Peskin & Berger three-point function
    inner = (1.0 + np.sqrt(np.clip(1.0 - 3.0 * a**2, 0.0, None))) / 3.0
    outer = (5.0 - 3.0 * a - np.sqrt(np.clip(1.0 - 3.0 * (1.0 - a) ** 2, 0.0, None))) / 6.0
    return np.where(a <= 0.5, inner, np.where(a <= 1.5, outer, 0.0))


def _peskin4(a: np.ndarray) -> np.ndarray:
    inner = (3.0 - 2.0 * a + np.sqrt(np.clip(1.0 + 4.0 * a - 4.0 * a**2, 0.0, None))) / 8.0
    outer = (5.0 - 2.0 * a - np.sqrt(np.clip(-7.0 + 12.0 * a - 4.0 * a**2, 0.0, None))) / 8.0
    return np.where(a < 1.0, inner, np.where(a < 2.0, outer, 0.0))


_PROFILES = {
    KernelKind.PIECEWISE_LINEAR_2PT: _hat,
    KernelKind.SMOOTH_3PT: _roma,
    KernelKind.PESKIN_4PT: _peskin4,
}


def evaluate_1d(kind: KernelKind, r):
    """Evaluate the one-dimensional kernel φ(r).

    Args:
        kind: Kernel family
        r: Grid-relative offset(s), scalar or array

    Returns:
        Kernel weight(s) with the shape of ``r``; zero outside the support
    """
    kind = KernelKind(kind)
    a = np.abs(np.asarray(r, dtype=float))
    value = _PROFILES[kind](a)
    return float(value) if np.ndim(value) == 0 else value


def evaluate_2d(kind: KernelKind, dx, dy, h: float):
    """Evaluate the tensor-product kernel δ_h(dx, dy) = φ(dx/h) φ(dy/h) / h².

    Raises:
        ValueError: If ``h`` is not positive
    """
    if not h > 0:
        raise ValueError(f"Grid spacing must be positive, got h={h}")
    return evaluate_1d(kind, np.asarray(dx) / h) * evaluate_1d(kind, np.asarray(dy) / h) / h**2


def _first_node(kind: KernelKind, s: np.ndarray) -> np.ndarray:
    """Lowest grid index inside the support of a point at grid coordinate ``s``."""
    if kind is KernelKind.PIECEWISE_LINEAR_2PT:
        return np.floor(s)
    if kind is KernelKind.SMOOTH_3PT:
        return np.floor(s + 0.5) - 1.0
    return np.floor(s) - 1.0


def stencil_weights(
    kind: KernelKind,
    x: np.ndarray,
    h: float,
    origin: float,
    offset: float,
    count: int,
    periodic: bool,
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised 1D stencil on a line of grid locations ``origin + (k + offset) h``.

    Off-domain weights of non-periodic lines are clipped and the remaining
    weights renormalised to sum to one.

    Args:
        kind: Kernel family
        x: Physical coordinates, shape (P,)
        h: Grid spacing
        origin: Domain origin along this axis
        offset: Location offset of the grid line in cells (0 for faces, 0.5 for centers)
        count: Number of grid locations along this axis
        periodic: Whether indices wrap

    Returns:
        Tuple of (indices, weights), both of shape (P, width)
    """
    kind = KernelKind(kind)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = (x - origin) / h - offset
    nodes = _first_node(kind, s)[:, None] + np.arange(kind.width)[None, :]
    weights = np.asarray(evaluate_1d(kind, s[:, None] - nodes))
    indices = nodes.astype(np.int64)
    if periodic:
        indices = np.mod(indices, count)
    else:
        outside = (indices < 0) | (indices >= count)
        if np.any(outside):
            weights = np.where(outside, 0.0, weights)
            total = weights.sum(axis=1, keepdims=True)
            weights = weights / np.where(total > 0.0, total, 1.0)
            indices = np.clip(indices, 0, count - 1)
    return indices, weights


def stencil(
    kind: KernelKind,
    x: float,
    h: float = 1.0,
    origin: float = 0.0,
    offset: float = 0.0,
    count: int = 0,
    periodic: bool = True,
) -> List[Tuple[int, float]]:
    """Stencil of a single point as a list of ``(grid index, weight)`` pairs.

    With ``periodic=True`` and ``count=0`` indices are returned unwrapped.
    """
    if periodic and count <= 0:
        kind = KernelKind(kind)
        s = np.array([(float(x) - origin) / h - offset])
        nodes = _first_node(kind, s)[0] + np.arange(kind.width)
        weights = np.asarray(evaluate_1d(kind, s[0] - nodes))
        return [(int(n), float(w)) for n, w in zip(nodes, weights)]
    indices, weights = stencil_weights(kind, np.array([x]), h, origin, offset, count, periodic)
    return [(int(i), float(w)) for i, w in zip(indices[0], weights[0])]
