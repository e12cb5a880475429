"""Lagrangian finite-element meshes, shape functions, quadrature and mass matrices."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg
from scipy.spatial import Delaunay
from scipy.special import roots_jacobi

from .exceptions import InvertedElementError, SolverFailure

logger = logging.getLogger(__name__)


class ElementKind(str, Enum):
    """Supported Lagrangian element families."""

    Q1_QUAD = "q1"
    P2_TRI = "p2tri"
    P2_EDGE = "p2edge"
    P1_EDGE = "p1edge"

    @property
    def reference_dim(self) -> int:
        return 2 if self in (ElementKind.Q1_QUAD, ElementKind.P2_TRI) else 1

    @property
    def n_nodes(self) -> int:
        return {"q1": 4, "p2tri": 6, "p2edge": 3, "p1edge": 2}[self.value]

    @property
    def reference_measure(self) -> float:
        return {"q1": 4.0, "p2tri": 0.5, "p2edge": 2.0, "p1edge": 2.0}[self.value]

    @property
    def facet_kind(self) -> Optional["ElementKind"]:
        if self is ElementKind.Q1_QUAD:
            return ElementKind.P1_EDGE
        if self is ElementKind.P2_TRI:
            return ElementKind.P2_EDGE
        return None


# local node lists of each facet; the facet parameter t runs from the first to the second node
FACET_NODES = {
    ElementKind.Q1_QUAD: np.array([[0, 1], [1, 2], [2, 3], [3, 0]]),
    ElementKind.P2_TRI: np.array([[0, 1, 3], [1, 2, 4], [2, 0, 5]]),
}


def facet_reference_points(kind: ElementKind, facet: int, t: np.ndarray) -> np.ndarray:
    """Element reference coordinates of facet parameter values ``t`` in [-1, 1]."""
    t = np.asarray(t, dtype=float)
    one = np.ones_like(t)
    if kind is ElementKind.Q1_QUAD:
        table = [(t, -one), (one, t), (-t, one), (-one, -t)]
    elif kind is ElementKind.P2_TRI:
        a = 0.5 * (1.0 + t)
        b = 0.5 * (1.0 - t)
        table = [(a, 0.0 * t), (b, a), (0.0 * t, b)]
    else:
        raise ValueError(f"Element kind {kind.value} has no facets")
    xi, eta = table[facet]
    return np.stack([xi, eta], axis=-1)


def shape_values(kind: ElementKind, points) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate nodal shape functions and their reference gradients.

    Args:
        kind: Element family
        points: Reference point(s), shape (dim,) or (nq, dim)

    Returns:
        Tuple of (values (nq, nen), gradients (nq, nen, dim)); a single point
        returns (nen,) and (nen, dim)
    """
    kind = ElementKind(kind)
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == (1 if kind.reference_dim == 2 else 0)
    pts = pts.reshape(-1, kind.reference_dim)

    if kind is ElementKind.Q1_QUAD:
        xi, eta = pts[:, 0], pts[:, 1]
        sx = np.array([-1.0, 1.0, 1.0, -1.0])
        sy = np.array([-1.0, -1.0, 1.0, 1.0])
        fx = 1.0 + np.outer(xi, sx)
        fy = 1.0 + np.outer(eta, sy)
        values = 0.25 * fx * fy
        grads = np.stack([0.25 * sx * fy, 0.25 * sy * fx], axis=-1)
    elif kind is ElementKind.P2_TRI:
        xi, eta = pts[:, 0], pts[:, 1]
        lam = np.stack([1.0 - xi - eta, xi, eta], axis=-1)
        dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        values = np.empty((pts.shape[0], 6))
        grads = np.empty((pts.shape[0], 6, 2))
        for i in range(3):
            values[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
            grads[:, i] = (4.0 * lam[:, i] - 1.0)[:, None] * dlam[i]
        for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
            values[:, 3 + k] = 4.0 * lam[:, i] * lam[:, j]
            grads[:, 3 + k] = 4.0 * (lam[:, j, None] * dlam[i] + lam[:, i, None] * dlam[j])
    elif kind is ElementKind.P2_EDGE:
        t = pts[:, 0]
        values = np.stack([0.5 * t * (t - 1.0), 0.5 * t * (t + 1.0), 1.0 - t**2], axis=-1)
        grads = np.stack([t - 0.5, t + 0.5, -2.0 * t], axis=-1)[:, :, None]
    else:
        t = pts[:, 0]
        values = np.stack([0.5 * (1.0 - t), 0.5 * (1.0 + t)], axis=-1)
        grads = np.stack([-0.5 * np.ones_like(t), 0.5 * np.ones_like(t)], axis=-1)[:, :, None]

    if single:
        return values[0], grads[0]
    return values, grads


# ----------------------------------------------------------------------
# quadrature
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Reference-element quadrature points and weights."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return int(self.weights.size)


class Quadrature:
    """Quadrature rule factories."""

    @staticmethod
    def gauss_legendre(n: int) -> QuadratureRule:
        """n-point Gauss-Legendre rule on [-1, 1]; exact to degree 2n - 1."""
        x, w = np.polynomial.legendre.leggauss(n)
        return QuadratureRule(x[:, None], w)

    @staticmethod
    def tensor_gauss(n: int) -> QuadratureRule:
        """n x n tensor Gauss rule on [-1, 1]^2."""
        x, w = np.polynomial.legendre.leggauss(n)
        xi, eta = np.meshgrid(x, x, indexing="ij")
        return QuadratureRule(np.stack([xi.ravel(), eta.ravel()], axis=-1), np.outer(w, w).ravel())

    @staticmethod
    def triangle_degree4() -> QuadratureRule:
        """Six-point rule on the unit right triangle, exact to degree 4."""
        a, wa = 0.445948490915965, 0.223381589678011
        b, wb = 0.091576213509771, 0.109951743655322
        points = np.array(
            [[a, a], [1.0 - 2.0 * a, a], [a, 1.0 - 2.0 * a], [b, b], [1.0 - 2.0 * b, b], [b, 1.0 - 2.0 * b]]
        )
        weights = 0.5 * np.array([wa, wa, wa, wb, wb, wb])
        return QuadratureRule(points, weights)

    @staticmethod
    def triangle_conical(n: int) -> QuadratureRule:
        """Collapsed (conical product) rule with n points per direction on the unit triangle."""
        a, wa = np.polynomial.legendre.leggauss(n)
        b, wb = roots_jacobi(n, 1.0, 0.0)
        a = 0.5 * (1.0 + a)
        b = 0.5 * (1.0 + b)
        aa, bb = np.meshgrid(a, b, indexing="ij")
        points = np.stack([(aa * (1.0 - bb)).ravel(), bb.ravel()], axis=-1)
        weights = np.outer(0.5 * wa, 0.25 * wb).ravel()
        return QuadratureRule(points, weights)

    @staticmethod
    def assembly(kind: ElementKind) -> QuadratureRule:
        """Fixed rule used for mass and force assembly (exact for mass-matrix integrands)."""
        kind = ElementKind(kind)
        if kind is ElementKind.Q1_QUAD:
            return Quadrature.tensor_gauss(2)
        if kind is ElementKind.P2_TRI:
            return Quadrature.triangle_degree4()
        if kind is ElementKind.P2_EDGE:
            return Quadrature.gauss_legendre(3)
        return Quadrature.gauss_legendre(2)

    @staticmethod
    def interaction(kind: ElementKind, order: int) -> QuadratureRule:
        """Interaction-point rule with ``order`` points per reference direction."""
        kind = ElementKind(kind)
        if kind is ElementKind.Q1_QUAD:
            return Quadrature.tensor_gauss(order)
        if kind is ElementKind.P2_TRI:
            return Quadrature.triangle_conical(order)
        return Quadrature.gauss_legendre(order)


# ----------------------------------------------------------------------
# meshes and configurations
# ----------------------------------------------------------------------


@dataclass
class FeMesh:
    """Lagrangian reference mesh of a single element kind.

    ``period`` holds optional reference-domain periods per axis; nodes on a
    periodic seam are identified, and element coordinates are unwrapped.
    """

    nodes: np.ndarray
    elements: np.ndarray
    kind: ElementKind
    boundary_facets: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    period: Tuple[Optional[float], Optional[float]] = (None, None)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.elements = np.asarray(self.elements, dtype=np.int64)
        self.kind = ElementKind(self.kind)
        self.boundary_facets = np.asarray(self.boundary_facets, dtype=np.int64).reshape(-1, 2)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise ValueError(f"Nodes must have shape (n, 2), got {self.nodes.shape}")
        if self.elements.ndim != 2 or self.elements.shape[1] != self.kind.n_nodes:
            raise ValueError(
                f"{self.kind.value} elements need {self.kind.n_nodes} nodes, got shape {self.elements.shape}"
            )
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= len(self.nodes)):
            raise ValueError("Element connectivity references nodes out of range")

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.elements.shape[0])

    def element_coordinates(self) -> np.ndarray:
        """Reference coordinates per element, shape (ne, nen, 2), unwrapped across periodic seams."""
        coords = self.nodes[self.elements].copy()
        for axis, length in enumerate(self.period):
            if length:
                delta = coords[:, :, axis] - coords[:, :1, axis]
                coords[:, :, axis] -= length * np.round(delta / length)
        return coords

    def facet_nodes(self) -> np.ndarray:
        """Global node ids of every boundary facet, shape (nf, nodes per facet)."""
        if self.boundary_facets.size == 0:
            return np.zeros((0, 0), dtype=np.int64)
        local = FACET_NODES[self.kind][self.boundary_facets[:, 1]]
        return np.take_along_axis(self.elements[self.boundary_facets[:, 0]], local, axis=1)

    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.facet_nodes())

    def validate(self) -> None:
        """Check element orientation and that boundary facets tile the boundary.

        Raises:
            InvertedElementError: If an element has a non-positive reference Jacobian
            ValueError: If the boundary facets are inconsistent with the connectivity
        """
        ElementGeometry.build(self, Quadrature.assembly(self.kind))
        if self.kind.facet_kind is None:
            return
        corner = FACET_NODES[self.kind][:, :2]
        edges = np.sort(self.elements[:, corner].reshape(-1, 2), axis=1)
        _, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
        single = np.flatnonzero(counts[inverse.ravel()] == 1)
        expected = {(int(k // corner.shape[0]), int(k % corner.shape[0])) for k in single}
        declared = {(int(e), int(f)) for e, f in self.boundary_facets}
        if expected != declared or len(declared) != len(self.boundary_facets):
            raise ValueError(
                f"Boundary facets do not tile the boundary ({len(declared)} declared, {len(expected)} expected)"
            )


@dataclass
class Configuration:
    """Deformed nodal positions and velocities of a mesh."""

    chi: np.ndarray
    dchi_dt: np.ndarray

    def __post_init__(self):
        self.chi = np.asarray(self.chi, dtype=float)
        self.dchi_dt = np.asarray(self.dchi_dt, dtype=float)
        if self.chi.shape != self.dchi_dt.shape or self.chi.ndim != 2 or self.chi.shape[1] != 2:
            raise ValueError(f"Configuration arrays must be (n, 2), got {self.chi.shape}/{self.dchi_dt.shape}")

    @classmethod
    def identity(cls, mesh: FeMesh) -> "Configuration":
        return cls(mesh.nodes.copy(), np.zeros_like(mesh.nodes))

    @classmethod
    def at(cls, chi: np.ndarray) -> "Configuration":
        chi = np.asarray(chi, dtype=float)
        return cls(chi.copy(), np.zeros_like(chi))

    def copy(self) -> "Configuration":
        return Configuration(self.chi.copy(), self.dchi_dt.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.chi)) and np.all(np.isfinite(self.dchi_dt)))


@dataclass
class ElementGeometry:
    """Shape data of every element at the points of one reference rule."""

    phi: np.ndarray
    dphi_dX: Optional[np.ndarray]
    JxW: np.ndarray

    @classmethod
    def build(cls, mesh: FeMesh, rule: QuadratureRule) -> "ElementGeometry":
        phi, dphi_dxi = shape_values(mesh.kind, rule.points)
        coords = mesh.element_coordinates()
        jac = np.einsum("enk,qnd->eqkd", coords, dphi_dxi)
        if mesh.kind.reference_dim == 2:
            det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
            _check_positive(det)
            inv = np.empty_like(jac)
            inv[..., 0, 0] = jac[..., 1, 1] / det
            inv[..., 1, 1] = jac[..., 0, 0] / det
            inv[..., 0, 1] = -jac[..., 0, 1] / det
            inv[..., 1, 0] = -jac[..., 1, 0] / det
            dphi_dX = np.einsum("qnd,eqdk->eqnk", dphi_dxi, inv)
            return cls(phi, dphi_dX, det * rule.weights[None, :])
        length = np.linalg.norm(jac[..., 0], axis=-1)
        _check_positive(length)
        return cls(phi, None, length * rule.weights[None, :])


def _check_positive(det: np.ndarray) -> None:
    bad = np.argwhere(~(det > 0.0))
    if bad.size:
        element = int(bad[0, 0])
        raise InvertedElementError(element, float(det[tuple(bad[0])]))


@dataclass
class FacetGeometry:
    """Volume and trace shape data at quadrature points of the boundary facets."""

    phi_volume: np.ndarray
    dphi_dX: np.ndarray
    phi_facet: np.ndarray
    normals: np.ndarray
    JxW: np.ndarray

    @classmethod
    def build(cls, mesh: FeMesh, rule: QuadratureRule) -> "FacetGeometry":
        facet_kind = mesh.kind.facet_kind
        if facet_kind is None:
            raise ValueError(f"{mesh.kind.value} meshes have no boundary facets")
        t = rule.points[:, 0]
        phi_facet, dphi_dt = shape_values(facet_kind, t[:, None])
        elements = mesh.boundary_facets[:, 0]
        local = mesh.boundary_facets[:, 1]
        coords = mesh.element_coordinates()[elements]
        nq = t.size
        nen = mesh.kind.n_nodes
        phi_volume = np.empty((len(elements), nq, nen))
        dphi_dX = np.empty((len(elements), nq, nen, 2))
        for f in range(FACET_NODES[mesh.kind].shape[0]):
            mask = local == f
            if not np.any(mask):
                continue
            xi = facet_reference_points(mesh.kind, f, t)
            phi, dphi_dxi = shape_values(mesh.kind, xi)
            jac = np.einsum("enk,qnd->eqkd", coords[mask], dphi_dxi)
            det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
            _check_positive(det)
            inv = np.linalg.inv(jac)
            phi_volume[mask] = phi[None]
            dphi_dX[mask] = np.einsum("qnd,eqdk->eqnk", dphi_dxi, inv)
        facet_coords = np.take_along_axis(coords, FACET_NODES[mesh.kind][local][:, :, None], axis=1)
        tangent = np.einsum("fnk,qn->fqk", facet_coords, dphi_dt[:, :, 0])
        length = np.linalg.norm(tangent, axis=-1)
        normals = np.stack([tangent[..., 1], -tangent[..., 0]], axis=-1) / length[..., None]
        return cls(phi_volume, dphi_dX, phi_facet, normals, length * rule.weights[None, :])


def deformation_gradients(mesh: FeMesh, geometry: ElementGeometry, chi: np.ndarray) -> np.ndarray:
    """Deformation gradients at every element quadrature point, shape (ne, nq, 2, 2)."""
    if geometry.dphi_dX is None:
        raise ValueError("Deformation gradients need a two-dimensional reference element")
    return np.einsum("enk,eqnj->eqkj", np.asarray(chi)[mesh.elements], geometry.dphi_dX)


def deformation_gradient(
    mesh: FeMesh, config: Configuration, element: int, point
) -> Tuple[np.ndarray, float]:
    """Deformation gradient 𝔽 = Σ χ_l ⊗ ∇_X φ_l and J = det 𝔽 at one reference point."""
    rule = QuadratureRule(np.asarray(point, dtype=float).reshape(1, -1), np.ones(1))
    single = FeMesh(mesh.nodes, mesh.elements[element : element + 1], mesh.kind, period=mesh.period)
    geometry = ElementGeometry.build(single, rule)
    F = deformation_gradients(single, geometry, config.chi)[0, 0]
    return F, float(np.linalg.det(F))


# ----------------------------------------------------------------------
# mass matrices
# ----------------------------------------------------------------------


class MassVariant(str, Enum):
    CONSISTENT = "consistent"
    LUMPED = "lumped"


@dataclass
class MassMatrix:
    """Nodal mass matrix; lumped matrices keep only their diagonal."""

    matrix: sp.csr_matrix
    variant: MassVariant = MassVariant.CONSISTENT

    @property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])


def _assemble_scalar(elements: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    nen = elements.shape[1]
    rows = np.repeat(elements, nen, axis=1).ravel()
    cols = np.tile(elements, (1, nen)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_mass(
    mesh: FeMesh,
    variant: MassVariant = MassVariant.CONSISTENT,
    rule: Optional[QuadratureRule] = None,
) -> MassMatrix:
    """Assemble M_lm = ∫_U φ_l φ_m dX.

    Args:
        mesh: Lagrangian mesh
        variant: Consistent or row-sum lumped
        rule: Quadrature rule (defaults to the exact-for-mass assembly rule)

    Returns:
        MassMatrix over mesh nodes

    Raises:
        InvertedElementError: If an element is degenerate
        ValueError: If lumping produces non-positive masses
    """
    variant = MassVariant(variant)
    rule = rule or Quadrature.assembly(mesh.kind)
    geometry = ElementGeometry.build(mesh, rule)
    local = np.einsum("qa,qb,eq->eab", geometry.phi, geometry.phi, geometry.JxW)
    matrix = _assemble_scalar(mesh.elements, local, mesh.n_nodes)
    if variant is MassVariant.LUMPED:
        matrix = _lump(matrix)
    logger.debug(f"Assembled {variant.value} mass matrix for {mesh.n_elements} {mesh.kind.value} elements")
    return MassMatrix(matrix, variant)


def _lump(matrix: sp.csr_matrix) -> sp.csr_matrix:
    row_sums = np.asarray(matrix.sum(axis=1)).ravel()
    if np.any(row_sums <= 1e-12 * np.abs(row_sums).max()):
        raise ValueError("Row-sum lumping yields non-positive masses for this element kind")
    return sp.diags(row_sums).tocsr()


def solve_mass(mass: MassMatrix, rhs: np.ndarray, rtol: float = 1e-12, maxiter: int = 2000) -> np.ndarray:
    """Solve [M] X = rhs for per-node scalars or vectors.

    Raises:
        SolverFailure: If conjugate gradients does not converge
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != mass.size:
        raise ValueError(f"Right-hand side has {rhs.shape[0]} rows, mass matrix has {mass.size}")
    diagonal = mass.diagonal
    if mass.variant is MassVariant.LUMPED:
        return rhs / (diagonal[:, None] if rhs.ndim == 2 else diagonal)
    columns = rhs.reshape(mass.size, -1)
    solution = np.zeros_like(columns)
    preconditioner = sp.diags(1.0 / diagonal)
    for k in range(columns.shape[1]):
        b = columns[:, k]
        if not np.any(b):
            continue
        x, info = cg(mass.matrix, b, rtol=rtol, atol=0.0, maxiter=maxiter, M=preconditioner)
        if info != 0:
            residual = np.linalg.norm(mass.matrix @ x - b) / np.linalg.norm(b)
            raise SolverFailure(f"Mass solve did not converge (info={info}, relative residual {residual:.3e})")
        solution[:, k] = x
    return solution.reshape(rhs.shape)


def lagrangian_inner_product(mass: MassMatrix, U: np.ndarray, V: np.ndarray) -> float:
    """Discrete Lagrangian inner product Σ_components Uᵀ [M] V."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.shape != V.shape or U.shape[0] != mass.size:
        raise ValueError(f"Sizes {U.shape}/{V.shape} do not conform to mass matrix of size {mass.size}")
    return float(np.sum(U * (mass.matrix @ V)))


def boundary_mass(mesh: FeMesh, rule: Optional[QuadratureRule] = None) -> Tuple[MassMatrix, np.ndarray]:
    """Mass matrix of the boundary trace space and its global node ids."""
    facet_kind = mesh.kind.facet_kind
    if facet_kind is None:
        raise ValueError(f"{mesh.kind.value} meshes have no boundary facets")
    rule = rule or Quadrature.assembly(facet_kind)
    geometry = FacetGeometry.build(mesh, rule)
    nodes = mesh.boundary_nodes()
    local_ids = np.searchsorted(nodes, mesh.facet_nodes())
    local = np.einsum("qa,qb,fq->fab", geometry.phi_facet, geometry.phi_facet, geometry.JxW)
    return MassMatrix(_assemble_scalar(local_ids, local, len(nodes))), nodes


# ----------------------------------------------------------------------
# mesh builders
# ----------------------------------------------------------------------


def build_shell_mesh(
    R: float,
    w: float,
    M: int,
    gamma: float = 0.0,
    center: Tuple[float, float] = (0.5, 0.5),
) -> Tuple[FeMesh, Configuration]:
    """Thick shell on the curvilinear domain [0, 2πR] x [0, w], periodic in s1.

    Uses a 28M-by-M grid of Q1 elements. The initial configuration is
    χ(s, 0) = (cos(s1/R)(R + s2) + c1, sin(s1/R)(R + γ + s2) + c2).

    Raises:
        ValueError: If R or w are not positive or M < 2
    """
    if not (R > 0 and w > 0):
        raise ValueError(f"Shell radius and thickness must be positive, got R={R}, w={w}")
    if M < 2:
        raise ValueError(f"Shell mesh needs M >= 2 radial elements, got M={M}")
    n_circ = 28 * M
    period = 2.0 * np.pi * R
    a, b = np.meshgrid(np.arange(n_circ), np.arange(M + 1), indexing="ij")
    nodes = np.stack([period * a.ravel() / n_circ, w * b.ravel() / M], axis=-1)

    def node(i, j):
        return np.mod(i, n_circ) * (M + 1) + j

    ea, eb = np.meshgrid(np.arange(n_circ), np.arange(M), indexing="ij")
    ea, eb = ea.ravel(), eb.ravel()
    elements = np.stack([node(ea, eb), node(ea + 1, eb), node(ea + 1, eb + 1), node(ea, eb + 1)], axis=-1)
    element_ids = np.arange(len(ea))
    inner = element_ids[eb == 0]
    outer = element_ids[eb == M - 1]
    facets = np.concatenate(
        [np.stack([inner, np.zeros_like(inner)], axis=-1), np.stack([outer, np.full_like(outer, 2)], axis=-1)]
    )
    mesh = FeMesh(nodes, elements, ElementKind.Q1_QUAD, facets, period=(period, None))
    s1, s2 = nodes[:, 0], nodes[:, 1]
    chi = np.stack(
        [np.cos(s1 / R) * (R + s2) + center[0], np.sin(s1 / R) * (R + gamma + s2) + center[1]], axis=-1
    )
    logger.info(f"Built shell mesh: {mesh.n_elements} Q1 elements ({n_circ}x{M}), gamma={gamma}")
    return mesh, Configuration.at(chi)


def build_disc_mesh(radius: float, center: Tuple[float, float], spacing: float) -> FeMesh:
    """Disc of P2 triangles with approximately ``spacing`` between nodes.

    Vertices are placed on concentric rings (a single center node gives a
    central fan), triangulated, smoothed once, and boundary mid-edge nodes are
    projected onto the circle.

    Raises:
        ValueError: If the spacing is not in (0, radius]
    """
    if not (0.0 < spacing <= radius):
        raise ValueError(f"Infeasible disc spacing {spacing} for radius {radius}")
    vertex_spacing = 2.0 * spacing
    rings = max(1, int(round(radius / vertex_spacing)))
    points = [np.zeros((1, 2))]
    for k in range(1, rings + 1):
        r = radius * k / rings
        count = max(6, int(round(2.0 * np.pi * r / vertex_spacing)))
        theta = 2.0 * np.pi * (np.arange(count) + 0.5 * (k % 2)) / count
        points.append(np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1))
    boundary_count = points[-1].shape[0]
    vertices = np.concatenate(points)
    n_interior = len(vertices) - boundary_count
    triangles = Delaunay(vertices).simplices.astype(np.int64)
    triangles = _orient_ccw(vertices, triangles)
    triangles = triangles[_signed_areas(vertices, triangles) > 1e-14 * radius**2]
    vertices = _smooth_once(vertices, triangles, n_interior)

    edges = np.sort(triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    unique_edges, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    midpoints = 0.5 * (vertices[unique_edges[:, 0]] + vertices[unique_edges[:, 1]])
    on_boundary = counts == 1
    radial = midpoints[on_boundary]
    midpoints[on_boundary] = radius * radial / np.linalg.norm(radial, axis=1, keepdims=True)
    nodes = np.concatenate([vertices, midpoints]) + np.asarray(center, dtype=float)
    edge_of = inverse.reshape(-1, 3)
    elements = np.concatenate([triangles, len(vertices) + edge_of], axis=1)
    boundary = np.argwhere(on_boundary[edge_of])
    mesh = FeMesh(nodes, elements, ElementKind.P2_TRI, boundary)
    mesh.validate()
    logger.info(f"Built disc mesh: {mesh.n_elements} P2 elements, {mesh.n_nodes} nodes, spacing={spacing}")
    return mesh


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a, b, c = (vertices[triangles[:, k]] for k in range(3))
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _orient_ccw(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    flip = _signed_areas(vertices, triangles) < 0.0
    triangles = triangles.copy()
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return triangles


def _smooth_once(vertices: np.ndarray, triangles: np.ndarray, n_interior: int) -> np.ndarray:
    """One Laplacian (Lloyd-type) smoothing pass over interior vertices, kept only if valid."""
    edges = triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    adjacency = sp.coo_matrix(
        (np.ones(2 * len(edges)), (np.r_[edges[:, 0], edges[:, 1]], np.r_[edges[:, 1], edges[:, 0]])),
        shape=(len(vertices), len(vertices)),
    ).tocsr()
    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    averaged = (adjacency @ vertices) / degree[:, None]
    smoothed = vertices.copy()
    # the center vertex and boundary ring stay fixed
    smoothed[1:n_interior] = averaged[1:n_interior]
    if np.all(_signed_areas(smoothed, triangles) > 0.0):
        return smoothed
    logger.debug("Disc smoothing pass rejected (would invert an element)")
    return vertices


def build_circle_mesh(radius: float, center: Tuple[float, float], spacing: float) -> FeMesh:
    """Closed curve of P2 edge elements with approximately ``spacing`` between nodes."""
    if not (0.0 < spacing <= radius):
        raise ValueError(f"Infeasible circle spacing {spacing} for radius {radius}")
    n_elements = max(3, int(np.ceil(np.pi * radius / spacing)))
    theta = 2.0 * np.pi * np.arange(2 * n_elements) / (2 * n_elements)
    nodes = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=-1) + np.asarray(center, dtype=float)
    e = np.arange(n_elements)
    elements = np.stack([2 * e, np.mod(2 * e + 2, 2 * n_elements), 2 * e + 1], axis=-1)
    logger.info(f"Built circle mesh: {n_elements} P2 edge elements, spacing={spacing}")
    return FeMesh(nodes, elements, ElementKind.P2_EDGE)


def build_rectangle_mesh(
    width: float,
    height: float,
    n1: int,
    n2: int,
    origin: Tuple[float, float] = (0.0, 0.0),
) -> FeMesh:
    """Structured n1-by-n2 grid of Q1 elements on a rectangle (no periodicity)."""
    if not (width > 0 and height > 0) or n1 < 1 or n2 < 1:
        raise ValueError(f"Invalid rectangle {width}x{height} with {n1}x{n2} elements")
    a, b = np.meshgrid(np.arange(n1 + 1), np.arange(n2 + 1), indexing="ij")
    nodes = np.stack([origin[0] + width * a.ravel() / n1, origin[1] + height * b.ravel() / n2], axis=-1)

    def node(i, j):
        return i * (n2 + 1) + j

    ea, eb = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    ea, eb = ea.ravel(), eb.ravel()
    elements = np.stack([node(ea, eb), node(ea + 1, eb), node(ea + 1, eb + 1), node(ea, eb + 1)], axis=-1)
    ids = np.arange(len(ea))
    facets = [
        np.stack([ids[eb == 0], np.zeros(n1, dtype=int)], axis=-1),
        np.stack([ids[ea == n1 - 1], np.ones(n2, dtype=int)], axis=-1),
        np.stack([ids[eb == n2 - 1], np.full(n1, 2)], axis=-1),
        np.stack([ids[ea == 0], np.full(n2, 3)], axis=-1),
    ]
    return FeMesh(nodes, elements, ElementKind.Q1_QUAD, np.concatenate(facets))
