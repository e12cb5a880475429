"""Staggered (MAC) Cartesian grid: field storage, operators and inner products.

Cells are square with spacing ``h``. Pressure lives at cell centers, the x1
velocity component at the centers of x1-faces (left/right cell edges) and the
x2 component at the centers of x2-faces (bottom/top cell edges).

Storage: every component is a 2D numpy array indexed ``[i, j]`` with ``i``
along x1 and ``j`` along x2, flattened in C (row-major, ``j`` fastest) order.

    u1: (n1 + 1, n2) faces at (origin1 + i h, origin2 + (j + 1/2) h)   (n1 rows if x1 periodic)
    u2: (n1, n2 + 1) faces at (origin1 + (i + 1/2) h, origin2 + j h)   (n2 cols if x2 periodic)
    p:  (n1, n2)     cells at (origin1 + (i + 1/2) h, origin2 + (j + 1/2) h)

Boundary closures (1D derivations, q_0 the first interior value, a the wall value):

    tangential Dirichlet  ghost = 2a - q_0   (linear through the wall value)
    tangential slip       ghost = q_0        (zero normal derivative)
    outflow tangential    ghost = -q_0       (tangential velocity zero)
    outflow normal        ghost = 2 q_b - q_{b-1}, so the normal second difference vanishes
    outflow pressure      p_b = 0 at the boundary face, half-cell difference to the first cell
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import xarray as xr

logger = logging.getLogger(__name__)

SIDES = ("left", "right", "bottom", "top")
_LOW_SIDE = ("left", "bottom")
_HIGH_SIDE = ("right", "top")


class BoundaryKind(str, Enum):
    """Physical boundary condition on one side of the domain."""

    PERIODIC = "periodic"
    VELOCITY = "velocity"
    OUTFLOW = "outflow"
    SLIP = "slip"


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary condition with its prescribed velocity (used by VELOCITY only)."""

    kind: BoundaryKind = BoundaryKind.PERIODIC
    value: Tuple[float, float] = (0.0, 0.0)

    @classmethod
    def periodic(cls) -> "BoundaryCondition":
        return cls(BoundaryKind.PERIODIC)

    @classmethod
    def velocity(cls, u1: float = 0.0, u2: float = 0.0) -> "BoundaryCondition":
        return cls(BoundaryKind.VELOCITY, (float(u1), float(u2)))

    @classmethod
    def outflow(cls) -> "BoundaryCondition":
        return cls(BoundaryKind.OUTFLOW)

    @classmethod
    def slip(cls) -> "BoundaryCondition":
        return cls(BoundaryKind.SLIP)


def _all_periodic() -> Dict[str, BoundaryCondition]:
    return {side: BoundaryCondition.periodic() for side in SIDES}


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Uniform staggered grid description."""

    n1: int
    n2: int
    h: float
    origin: Tuple[float, float] = (0.0, 0.0)
    bc: Mapping[str, BoundaryCondition] = field(default_factory=_all_periodic)

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"Grid spacing must be positive, got h={self.h}")
        if self.n1 < 4 or self.n2 < 4:
            raise ValueError(f"Grid needs at least 4 cells per direction, got {self.n1}x{self.n2}")
        missing = [side for side in SIDES if side not in self.bc]
        if missing:
            raise ValueError(f"Missing boundary conditions for sides: {missing}")
        for low, high in zip(_LOW_SIDE, _HIGH_SIDE):
            low_periodic = self.bc[low].kind is BoundaryKind.PERIODIC
            high_periodic = self.bc[high].kind is BoundaryKind.PERIODIC
            if low_periodic != high_periodic:
                raise ValueError(f"Periodic sides must come in pairs: {low}/{high}")

    @classmethod
    def periodic_box(
        cls, n1: int, n2: int, h: float, origin: Tuple[float, float] = (0.0, 0.0)
    ) -> "GridSpec":
        """Doubly periodic grid."""
        return cls(n1=n1, n2=n2, h=h, origin=origin, bc=_all_periodic())

    @property
    def periodic(self) -> Tuple[bool, bool]:
        return (
            self.bc["left"].kind is BoundaryKind.PERIODIC,
            self.bc["bottom"].kind is BoundaryKind.PERIODIC,
        )

    @property
    def lengths(self) -> Tuple[float, float]:
        return (self.n1 * self.h, self.n2 * self.h)

    @property
    def cells(self) -> Tuple[int, int]:
        return (self.n1, self.n2)

    def component_shape(self, component: int) -> Tuple[int, int]:
        """Array shape of velocity component 0 (x1) or 1 (x2)."""
        shape = [self.n1, self.n2]
        if not self.periodic[component]:
            shape[component] += 1
        return (shape[0], shape[1])

    def side_bc(self, axis: int, high: bool) -> BoundaryCondition:
        return self.bc[(_HIGH_SIDE if high else _LOW_SIDE)[axis]]

    def same_grid(self, other: "GridSpec") -> bool:
        return (
            self.n1 == other.n1
            and self.n2 == other.n2
            and self.h == other.h
            and tuple(self.origin) == tuple(other.origin)
            and all(self.bc[s] == other.bc[s] for s in SIDES)
        )


@dataclass
class StaggeredField:
    """Face-centered vector field (velocity or force density)."""

    u1: np.ndarray
    u2: np.ndarray

    @classmethod
    def zeros(cls, spec: GridSpec) -> "StaggeredField":
        return cls(np.zeros(spec.component_shape(0)), np.zeros(spec.component_shape(1)))

    def components(self) -> Tuple[np.ndarray, np.ndarray]:
        return (self.u1, self.u2)

    def copy(self) -> "StaggeredField":
        return StaggeredField(self.u1.copy(), self.u2.copy())

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.u1)), np.max(np.abs(self.u2))))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u1)) and np.all(np.isfinite(self.u2)))

    def __add__(self, other: "StaggeredField") -> "StaggeredField":
        return StaggeredField(self.u1 + other.u1, self.u2 + other.u2)

    def __sub__(self, other: "StaggeredField") -> "StaggeredField":
        return StaggeredField(self.u1 - other.u1, self.u2 - other.u2)

    def __mul__(self, scale: float) -> "StaggeredField":
        return StaggeredField(self.u1 * scale, self.u2 * scale)

    __rmul__ = __mul__

    def __neg__(self) -> "StaggeredField":
        return StaggeredField(-self.u1, -self.u2)


@dataclass
class CellField:
    """Cell-centered scalar field (pressure, divergence)."""

    values: np.ndarray

    @classmethod
    def zeros(cls, spec: GridSpec) -> "CellField":
        return cls(np.zeros(spec.cells))

    def copy(self) -> "CellField":
        return CellField(self.values.copy())

    def __add__(self, other: "CellField") -> "CellField":
        return CellField(self.values + other.values)

    def __sub__(self, other: "CellField") -> "CellField":
        return CellField(self.values - other.values)

    def __mul__(self, scale: float) -> "CellField":
        return CellField(self.values * scale)

    __rmul__ = __mul__


@dataclass
class DofOperators:
    """Operators restricted to unknown velocity degrees of freedom.

    Each affine operator acts as ``A @ x + b`` with ``x`` the unknown faces and
    ``b`` the contribution of prescribed boundary values.
    """

    laplacian: sp.csr_matrix
    laplacian_bc: np.ndarray
    divergence: sp.csr_matrix
    divergence_bc: np.ndarray
    gradient: sp.csr_matrix
    pressure_nullspace: bool


class MacGrid:
    """Operators, inner products and layout helpers for one :class:`GridSpec`."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.h = spec.h
        self._shapes = (spec.component_shape(0), spec.component_shape(1))
        self._sizes = (int(np.prod(self._shapes[0])), int(np.prod(self._shapes[1])))
        self.n_faces = self._sizes[0] + self._sizes[1]
        self.n_cells = spec.n1 * spec.n2
        logger.debug(
            f"Initialized MacGrid {spec.n1}x{spec.n2}, h={spec.h}, periodic={spec.periodic}, "
            f"{self.n_faces} faces"
        )

    # ------------------------------------------------------------------
    # layout
    # ------------------------------------------------------------------

    def _offset(self, component: int) -> int:
        return 0 if component == 0 else self._sizes[0]

    def face_index(self, component: int) -> np.ndarray:
        """Flat full-vector index of every face of one component."""
        shape = self._shapes[component]
        return np.arange(shape[0] * shape[1]).reshape(shape) + self._offset(component)

    def cell_index(self) -> np.ndarray:
        return np.arange(self.n_cells).reshape(self.spec.cells)

    def full_vector(self, u: StaggeredField) -> np.ndarray:
        self.check(u)
        return np.concatenate([u.u1.ravel(), u.u2.ravel()])

    def field_from_vector(self, vector: np.ndarray) -> StaggeredField:
        vector = np.asarray(vector)
        if vector.shape != (self.n_faces,):
            raise ValueError(f"Expected face vector of length {self.n_faces}, got {vector.shape}")
        n0 = self._sizes[0]
        return StaggeredField(
            vector[:n0].reshape(self._shapes[0]).copy(), vector[n0:].reshape(self._shapes[1]).copy()
        )

    def check(self, u: StaggeredField) -> None:
        """Raise ``ValueError`` if ``u`` does not conform to this grid."""
        if u.u1.shape != self._shapes[0] or u.u2.shape != self._shapes[1]:
            raise ValueError(
                f"Field shapes {u.u1.shape}/{u.u2.shape} do not match grid {self._shapes}"
            )

    def check_cells(self, p: CellField) -> None:
        if p.values.shape != self.spec.cells:
            raise ValueError(f"Cell field shape {p.values.shape} does not match grid {self.spec.cells}")

    # ------------------------------------------------------------------
    # coordinates
    # ------------------------------------------------------------------

    def face_coordinates(self, component: int) -> Tuple[np.ndarray, np.ndarray]:
        """Physical coordinates of the faces of one component, each shaped like the component."""
        shape = self._shapes[component]
        offsets = [0.5, 0.5]
        offsets[component] = 0.0
        x = self.spec.origin[0] + (np.arange(shape[0]) + offsets[0]) * self.h
        y = self.spec.origin[1] + (np.arange(shape[1]) + offsets[1]) * self.h
        return np.meshgrid(x, y, indexing="ij")

    def cell_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        x = self.spec.origin[0] + (np.arange(self.spec.n1) + 0.5) * self.h
        y = self.spec.origin[1] + (np.arange(self.spec.n2) + 0.5) * self.h
        return np.meshgrid(x, y, indexing="ij")

    def sample(
        self,
        fn1: Callable[[np.ndarray, np.ndarray], np.ndarray],
        fn2: Callable[[np.ndarray, np.ndarray], np.ndarray],
    ) -> StaggeredField:
        """Sample a vector function at face centers."""
        x1, y1 = self.face_coordinates(0)
        x2, y2 = self.face_coordinates(1)
        return StaggeredField(
            np.broadcast_to(np.asarray(fn1(x1, y1), dtype=float), x1.shape).copy(),
            np.broadcast_to(np.asarray(fn2(x2, y2), dtype=float), x2.shape).copy(),
        )

    def sample_cells(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> CellField:
        x, y = self.cell_coordinates()
        return CellField(np.broadcast_to(np.asarray(fn(x, y), dtype=float), x.shape).copy())

    # ------------------------------------------------------------------
    # boundary data
    # ------------------------------------------------------------------

    @cached_property
    def unknown_mask(self) -> np.ndarray:
        """Full-vector mask of faces whose velocity is solved for."""
        mask = np.ones(self.n_faces, dtype=bool)
        for c in (0, 1):
            if self.spec.periodic[c]:
                continue
            index = np.moveaxis(self.face_index(c), c, 0)
            for high, boundary in ((False, index[0]), (True, index[-1])):
                if self.spec.side_bc(c, high).kind is not BoundaryKind.OUTFLOW:
                    mask[boundary] = False
        return mask

    @cached_property
    def known_values(self) -> np.ndarray:
        """Prescribed normal velocity on known boundary faces (zero elsewhere)."""
        values = np.zeros(self.n_faces)
        for c in (0, 1):
            if self.spec.periodic[c]:
                continue
            index = np.moveaxis(self.face_index(c), c, 0)
            for high, boundary in ((False, index[0]), (True, index[-1])):
                bc = self.spec.side_bc(c, high)
                if bc.kind is BoundaryKind.VELOCITY:
                    values[boundary] = bc.value[c]
        return values

    @cached_property
    def face_weights(self) -> np.ndarray:
        """Inner-product weights: 1/2 on non-periodic boundary faces, 1 elsewhere."""
        weights = np.ones(self.n_faces)
        for c in (0, 1):
            if self.spec.periodic[c]:
                continue
            index = np.moveaxis(self.face_index(c), c, 0)
            weights[index[0]] = 0.5
            weights[index[-1]] = 0.5
        return weights

    def apply_boundary_values(self, u: StaggeredField) -> StaggeredField:
        """Copy of ``u`` with prescribed boundary faces overwritten."""
        vector = self.full_vector(u)
        known = ~self.unknown_mask
        vector[known] = self.known_values[known]
        return self.field_from_vector(vector)

    def to_dofs(self, u: StaggeredField) -> np.ndarray:
        return self.full_vector(u)[self.unknown_mask]

    def from_dofs(self, dofs: np.ndarray) -> StaggeredField:
        vector = self.known_values.copy()
        vector[self.unknown_mask] = dofs
        return self.field_from_vector(vector)

    @property
    def has_outflow(self) -> bool:
        return any(self.spec.bc[side].kind is BoundaryKind.OUTFLOW for side in SIDES)

    # ------------------------------------------------------------------
    # sparse operators on full vectors
    # ------------------------------------------------------------------

    @cached_property
    def _laplacian_full(self) -> Tuple[sp.csr_matrix, np.ndarray]:
        rows, cols, vals = [], [], []
        const = np.zeros(self.n_faces)

        def add(r, c, v):
            r = np.asarray(r).ravel()
            rows.append(r)
            cols.append(np.asarray(c).ravel())
            vals.append(np.full(r.shape, float(v)))

        for c in (0, 1):
            index = self.face_index(c)
            for axis in (0, 1):
                line = np.moveaxis(index, axis, 0)
                if self.spec.periodic[axis]:
                    add(line, line, -2.0)
                    add(line, np.roll(line, 1, axis=0), 1.0)
                    add(line, np.roll(line, -1, axis=0), 1.0)
                    continue
                inner = line[1:-1]
                add(inner, inner, -2.0)
                add(inner, line[:-2], 1.0)
                add(inner, line[2:], 1.0)
                if axis == c:
                    # normal direction on boundary faces: linear extrapolation, no contribution
                    continue
                for high, row, neighbour in ((False, line[0], line[1]), (True, line[-1], line[-2])):
                    bc = self.spec.side_bc(axis, high)
                    if bc.kind is BoundaryKind.SLIP:
                        add(row, row, -1.0)
                        add(row, neighbour, 1.0)
                    else:
                        add(row, row, -3.0)
                        add(row, neighbour, 1.0)
                        wall = bc.value[c] if bc.kind is BoundaryKind.VELOCITY else 0.0
                        const[row.ravel()] += 2.0 * wall
        matrix = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_faces, self.n_faces),
        ).tocsr()
        return matrix / self.h**2, const / self.h**2

    @cached_property
    def _divergence_full(self) -> sp.csr_matrix:
        cells = self.cell_index()
        rows, cols, vals = [], [], []
        for c in (0, 1):
            index = self.face_index(c)
            lower = index[: self.spec.n1, : self.spec.n2]
            upper = np.roll(index, -1, axis=c)[: self.spec.n1, : self.spec.n2]
            rows += [cells.ravel(), cells.ravel()]
            cols += [upper.ravel(), lower.ravel()]
            vals += [np.full(self.n_cells, 1.0), np.full(self.n_cells, -1.0)]
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_cells, self.n_faces),
        ).tocsr() / self.h

    @cached_property
    def _gradient_full(self) -> sp.csr_matrix:
        cells = self.cell_index()
        rows, cols, vals = [], [], []

        def add(r, c, v):
            r = np.asarray(r).ravel()
            rows.append(r)
            cols.append(np.asarray(c).ravel())
            vals.append(np.full(r.shape, float(v)))

        for c in (0, 1):
            index = np.moveaxis(self.face_index(c), c, 0)
            line = np.moveaxis(cells, c, 0)
            if self.spec.periodic[c]:
                add(index, line, 1.0)
                add(index, np.roll(line, 1, axis=0), -1.0)
                continue
            add(index[1:-1], line[1:], 1.0)
            add(index[1:-1], line[:-1], -1.0)
            if self.spec.side_bc(c, False).kind is BoundaryKind.OUTFLOW:
                add(index[0], line[0], 2.0)
            if self.spec.side_bc(c, True).kind is BoundaryKind.OUTFLOW:
                add(index[-1], line[-1], -2.0)
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_faces, self.n_cells),
        ).tocsr() / self.h

    @cached_property
    def dof_operators(self) -> DofOperators:
        """Operators restricted to the unknown faces, with boundary contributions split off."""
        unknown = self.unknown_mask
        known_vector = np.where(unknown, 0.0, self.known_values)
        lap, lap_const = self._laplacian_full
        lap_rows = lap[unknown]
        div = self._divergence_full
        return DofOperators(
            laplacian=lap_rows[:, unknown].tocsr(),
            laplacian_bc=lap_rows @ known_vector + lap_const[unknown],
            divergence=div[:, unknown].tocsr(),
            divergence_bc=div @ known_vector,
            gradient=self._gradient_full[unknown].tocsr(),
            pressure_nullspace=not self.has_outflow,
        )

    # ------------------------------------------------------------------
    # public operators
    # ------------------------------------------------------------------

    def divergence(self, u: StaggeredField) -> CellField:
        """Cell-centered divergence of a face field."""
        values = self._divergence_full @ self.full_vector(u)
        return CellField(values.reshape(self.spec.cells))

    def gradient(self, p: CellField) -> StaggeredField:
        """Face-centered gradient of a cell field; prescribed boundary faces receive zero."""
        self.check_cells(p)
        return self.field_from_vector(self._gradient_full @ p.values.ravel())

    def laplacian(self, u: StaggeredField) -> StaggeredField:
        """Componentwise 5-point Laplacian with ghost-cell boundary closures.

        Prescribed boundary faces receive zero.
        """
        lap, const = self._laplacian_full
        values = lap @ self.full_vector(u) + const
        values[~self.unknown_mask] = 0.0
        return self.field_from_vector(values)

    def cell_laplacian(self, p: CellField) -> CellField:
        """Standard 5-point cell-centered Laplacian (periodic wrap or zero-flux walls)."""
        self.check_cells(p)
        return CellField((self._divergence_full @ (self._gradient_full @ p.values.ravel())).reshape(self.spec.cells))

    def inner_product(self, u: StaggeredField, v: StaggeredField) -> float:
        """Discrete Eulerian inner product (u, v)_x = Σ w u v h²."""
        a = self.full_vector(u)
        b = self.full_vector(v)
        return float(np.sum(self.face_weights * a * b) * self.h**2)

    def cell_inner_product(self, p: CellField, q: CellField) -> float:
        self.check_cells(p)
        self.check_cells(q)
        return float(np.sum(p.values * q.values) * self.h**2)

    def kinetic_energy(self, u: StaggeredField, rho: float = 1.0) -> float:
        return 0.5 * rho * self.inner_product(u, u)

    # ------------------------------------------------------------------
    # ghost padding for upwind reconstructions
    # ------------------------------------------------------------------

    def pad_component(self, q: np.ndarray, component: int, ghosts: int) -> np.ndarray:
        """Extend one velocity component by ``ghosts`` layers on every side."""
        out = q
        for axis in (0, 1):
            out = self._pad_axis(out, component, axis, ghosts)
        return out

    def _pad_axis(self, q: np.ndarray, component: int, axis: int, ghosts: int) -> np.ndarray:
        if self.spec.periodic[axis]:
            widths = [(0, 0), (0, 0)]
            widths[axis] = (ghosts, ghosts)
            return np.pad(q, widths, mode="wrap")
        line = np.moveaxis(q, axis, 0)
        g = np.arange(1, ghosts + 1)[:, None]
        if axis == component:
            low = (1 + g) * line[0] - g * line[1]
            high = (1 + g) * line[-1] - g * line[-2]
        else:
            low = self._tangential_ghosts(line[:ghosts], self.spec.side_bc(axis, False), component)
            high = self._tangential_ghosts(line[::-1][:ghosts], self.spec.side_bc(axis, True), component)
        padded = np.concatenate([low[::-1], line, high], axis=0)
        return np.moveaxis(padded, 0, axis)

    @staticmethod
    def _tangential_ghosts(mirror: np.ndarray, bc: BoundaryCondition, component: int) -> np.ndarray:
        # mirror[k] is the interior value reflected into ghost layer k + 1
        if bc.kind is BoundaryKind.SLIP:
            return mirror.copy()
        wall = bc.value[component] if bc.kind is BoundaryKind.VELOCITY else 0.0
        return 2.0 * wall - mirror

    # ------------------------------------------------------------------
    # export
    # ------------------------------------------------------------------

    def to_dataset(self, u: Optional[StaggeredField] = None, p: Optional[CellField] = None) -> xr.Dataset:
        """Labelled copy of grid fields for analysis outside the solver."""
        data = {}
        if u is not None:
            x1, y1 = self.face_coordinates(0)
            x2, y2 = self.face_coordinates(1)
            data["u1"] = xr.DataArray(u.u1, dims=("x_face", "y_cell"), coords={"x_face": x1[:, 0], "y_cell": y1[0]})
            data["u2"] = xr.DataArray(u.u2, dims=("x_cell", "y_face"), coords={"x_cell": x2[:, 0], "y_face": y2[0]})
        if p is not None:
            xc, yc = self.cell_coordinates()
            data["p"] = xr.DataArray(p.values, dims=("x_cell", "y_cell"), coords={"x_cell": xc[:, 0], "y_cell": yc[0]})
        return xr.Dataset(data, attrs={"h": self.h, "n1": self.spec.n1, "n2": self.spec.n2})
