"""Lagrangian-Eulerian interaction: interaction points, force spreading and velocity restriction.

Spreading prolongs Lagrangian force densities to the faces of the MAC grid,

    f(x_face) = Σ_Q F(X_Q) δ_h(x_face - χ(X_Q)) ω_Q,

and velocity restriction is its adjoint, J = M^{-1} S^T h², so that
(F, J u)_X = (S F, u)_x for structures away from non-periodic walls.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .elasticity import (
    ConstitutiveModel,
    ElasticForceAssembler,
    Formulation,
    LagrangianForce,
    RigidPenalty,
    rigid_force,
)
from .exceptions import InteractionRuleError
from .fem_mesh import (
    FACET_NODES,
    Configuration,
    ElementGeometry,
    FeMesh,
    MassMatrix,
    Quadrature,
    facet_reference_points,
    shape_values,
    solve_mass,
)
from .kernels import KernelKind, stencil_weights
from .mac_grid import MacGrid, StaggeredField

logger = logging.getLogger(__name__)

MAX_INTERACTION_ORDER = 32
MIN_INTERACTION_ORDER = 2


def interaction_order(extent: np.ndarray, h: float, density: float) -> np.ndarray:
    """Gauss points per reference direction for elements of the given deformed extent."""
    needed = np.ceil(density * np.asarray(extent) / h - 1e-9).astype(int)
    return np.maximum(MIN_INTERACTION_ORDER, needed)


def _extents(chi: np.ndarray, connectivity: np.ndarray) -> np.ndarray:
    """Larger side of the deformed axis-aligned bounding box of each cell."""
    points = chi[connectivity]
    return np.max(points.max(axis=1) - points.min(axis=1), axis=-1)


@dataclass
class InteractionRule:
    """Interaction points of every element (or boundary facet) for one configuration.

    Attributes:
        orders: Gauss points per direction of each element or facet
        extents: Deformed extents the orders were chosen for
        element: Owning mesh element of every point
        basis: Nodal shape values at the points (points x mesh nodes)
        values: Shape values mapping the force coefficients to the points
        weights: Reference measure weight of every point
        boundary_nodes: Global ids of the boundary coefficients (surface rules only)
    """

    orders: np.ndarray
    extents: np.ndarray
    element: np.ndarray
    basis: sp.csr_matrix
    values: sp.csr_matrix
    weights: np.ndarray
    density: float
    rebuild_threshold: float
    boundary_nodes: Optional[np.ndarray] = None

    @property
    def n_points(self) -> int:
        return int(self.weights.size)

    @property
    def is_surface(self) -> bool:
        return self.boundary_nodes is not None

    def positions(self, chi: np.ndarray) -> np.ndarray:
        """Current positions χ(X_Q) of the interaction points, shape (P, 2)."""
        return self.basis @ np.asarray(chi)

    def needs_rebuild(self, chi: np.ndarray, connectivity: np.ndarray) -> bool:
        """True when any cell has grown by more than the rebuild threshold since the build."""
        grown = _extents(np.asarray(chi), connectivity) > (1.0 + self.rebuild_threshold) * self.extents
        return bool(np.any(grown))


def _point_matrix(point_rows: np.ndarray, nodes: np.ndarray, values: np.ndarray, n_cols: int) -> sp.csr_matrix:
    rows = np.repeat(point_rows[:, None], nodes.shape[1], axis=1)
    return sp.coo_matrix((values.ravel(), (rows.ravel(), nodes.ravel())), shape=(len(point_rows), n_cols)).tocsr()


def _check_orders(orders: np.ndarray) -> None:
    too_high = np.flatnonzero(orders > MAX_INTERACTION_ORDER)
    if too_high.size:
        e = int(too_high[0])
        raise InteractionRuleError(
            f"Interaction rule needs {orders[e]} points per direction (maximum {MAX_INTERACTION_ORDER}); "
            "refine the Lagrangian mesh",
            element=e,
        )


def build_interaction_rule(
    mesh: FeMesh,
    config: Configuration,
    h: float,
    density: float = 3.0,
    rebuild_threshold: float = 0.1,
) -> InteractionRule:
    """Interaction points over element interiors with ``density`` points per grid cell per direction.

    Raises:
        InteractionRuleError: If an element needs more than the tabulated maximum order
    """
    if not h > 0:
        raise ValueError(f"Grid spacing must be positive, got h={h}")
    extents = _extents(config.chi, mesh.elements)
    orders = interaction_order(extents, h, density)
    _check_orders(orders)

    elements, rows_values, weights = [], [], []
    for order in np.unique(orders):
        selected = np.flatnonzero(orders == order)
        rule = Quadrature.interaction(mesh.kind, int(order))
        subset = FeMesh(mesh.nodes, mesh.elements[selected], mesh.kind, period=mesh.period)
        geometry = ElementGeometry.build(subset, rule)
        elements.append(np.repeat(selected, rule.size))
        rows_values.append(np.broadcast_to(geometry.phi, (len(selected),) + geometry.phi.shape).reshape(-1, mesh.kind.n_nodes))
        weights.append(geometry.JxW.ravel())
    element = np.concatenate(elements)
    order_index = np.argsort(element, kind="stable")
    element = element[order_index]
    phi = np.concatenate(rows_values)[order_index]
    weights = np.concatenate(weights)[order_index]
    basis = _point_matrix(np.arange(len(element)), mesh.elements[element], phi, mesh.n_nodes)
    logger.debug(
        f"Built interaction rule: {len(element)} points, orders {orders.min()}-{orders.max()} "
        f"over {mesh.n_elements} elements"
    )
    return InteractionRule(orders, extents, element, basis, basis, weights, density, rebuild_threshold)


def build_boundary_interaction_rule(
    mesh: FeMesh,
    config: Configuration,
    h: float,
    density: float = 3.0,
    rebuild_threshold: float = 0.1,
) -> InteractionRule:
    """Interaction points on the boundary facets, weighted by reference surface measure."""
    facet_kind = mesh.kind.facet_kind
    if facet_kind is None:
        raise ValueError(f"{mesh.kind.value} meshes have no boundary facets")
    facet_nodes = mesh.facet_nodes()
    boundary_nodes = np.unique(facet_nodes)
    extents = _extents(config.chi, facet_nodes)
    orders = interaction_order(extents, h, density)
    _check_orders(orders)
    coords = mesh.element_coordinates()
    local_facets = FACET_NODES[mesh.kind]

    element, vol_phi, vol_nodes, facet_phi, facet_ids, weights = [], [], [], [], [], []
    for f, (e, local) in enumerate(mesh.boundary_facets):
        rule = Quadrature.gauss_legendre(int(orders[f]))
        t = rule.points[:, 0]
        psi, dpsi = shape_values(facet_kind, t[:, None])
        tangent = np.einsum("nk,qn->qk", coords[e][local_facets[local]], dpsi[:, :, 0])
        phi, _ = shape_values(mesh.kind, facet_reference_points(mesh.kind, int(local), t))
        element.append(np.full(rule.size, e))
        vol_phi.append(phi)
        vol_nodes.append(np.broadcast_to(mesh.elements[e], phi.shape))
        facet_phi.append(psi)
        facet_ids.append(np.broadcast_to(np.searchsorted(boundary_nodes, facet_nodes[f]), psi.shape))
        weights.append(np.linalg.norm(tangent, axis=-1) * rule.weights)
    element = np.concatenate(element)
    rows = np.arange(len(element))
    basis = _point_matrix(rows, np.concatenate(vol_nodes), np.concatenate(vol_phi), mesh.n_nodes)
    values = _point_matrix(rows, np.concatenate(facet_ids), np.concatenate(facet_phi), len(boundary_nodes))
    logger.debug(f"Built boundary interaction rule: {len(element)} points on {len(orders)} facets")
    return InteractionRule(
        orders, extents, element, basis, values, np.concatenate(weights), density, rebuild_threshold, boundary_nodes
    )


class SpreadOperator:
    """Sparse kernel matrices between interaction points and grid faces at one configuration.

    ``S_c`` has entries φ(Δx/h) φ(Δy/h) / h² from points to the faces of
    component ``c``. Spreading and interpolation share the same matrices.
    """

    def __init__(self, grid: MacGrid, positions: np.ndarray, kernel: KernelKind, element: Optional[np.ndarray] = None):
        self.grid = grid
        self.kernel = KernelKind(kernel)
        positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        self._check_inside(positions, element)
        self.n_points = len(positions)
        self.matrices = tuple(self._component_matrix(c, positions) for c in (0, 1))

    def _check_inside(self, positions: np.ndarray, element: Optional[np.ndarray]) -> None:
        spec = self.grid.spec
        for axis in (0, 1):
            if spec.periodic[axis]:
                continue
            low = spec.origin[axis]
            high = low + spec.lengths[axis]
            outside = np.flatnonzero((positions[:, axis] < low) | (positions[:, axis] > high) | ~np.isfinite(positions[:, axis]))
            if outside.size:
                owner = int(element[outside[0]]) if element is not None else None
                raise InteractionRuleError(
                    f"Interaction point {positions[outside[0]].tolist()} lies outside the domain", element=owner
                )

    def _component_matrix(self, component: int, positions: np.ndarray) -> sp.csr_matrix:
        spec = self.grid.spec
        shape = spec.component_shape(component)
        lines = []
        for axis in (0, 1):
            lines.append(
                stencil_weights(
                    self.kernel,
                    positions[:, axis],
                    spec.h,
                    spec.origin[axis],
                    0.0 if axis == component else 0.5,
                    shape[axis],
                    spec.periodic[axis],
                )
            )
        (ix, wx), (iy, wy) = lines
        faces = self.grid.face_index(component)[ix[:, :, None], iy[:, None, :]]
        weights = wx[:, :, None] * wy[:, None, :] / spec.h**2
        points = np.broadcast_to(np.arange(len(positions))[:, None, None], faces.shape)
        return sp.coo_matrix(
            (weights.ravel(), (faces.ravel(), points.ravel())), shape=(self.grid.n_faces, len(positions))
        ).tocsr()

    def spread(self, values: np.ndarray) -> StaggeredField:
        """Face field Σ_Q values_Q δ_h(x - x_Q); ``values`` already carry the point weights."""
        values = np.asarray(values, dtype=float).reshape(self.n_points, 2)
        vector = self.matrices[0] @ values[:, 0] + self.matrices[1] @ values[:, 1]
        return self.grid.field_from_vector(vector)

    def interpolate(self, u: StaggeredField) -> np.ndarray:
        """Point values U(x_Q) = Σ u δ_h h², shape (P, 2)."""
        vector = self.grid.full_vector(u)
        h2 = self.grid.h**2
        return np.stack([h2 * (self.matrices[c].T @ vector) for c in (0, 1)], axis=-1)


def spread_operator(rule: InteractionRule, config: Configuration, grid: MacGrid, kernel: KernelKind) -> SpreadOperator:
    return SpreadOperator(grid, rule.positions(config.chi), kernel, rule.element)


def spread_volume(
    rule: InteractionRule,
    config: Configuration,
    F: np.ndarray,
    grid: MacGrid,
    kernel: KernelKind,
    operator: Optional[SpreadOperator] = None,
) -> StaggeredField:
    """Spread nodal force-density coefficients over the element interiors."""
    operator = operator or spread_operator(rule, config, grid, kernel)
    return operator.spread((rule.values @ np.asarray(F)) * rule.weights[:, None])


def spread_surface(
    rule: InteractionRule,
    config: Configuration,
    T: np.ndarray,
    grid: MacGrid,
    kernel: KernelKind,
    operator: Optional[SpreadOperator] = None,
) -> StaggeredField:
    """Spread boundary-node transmission coefficients over the boundary facets."""
    if not rule.is_surface:
        raise ValueError("Surface spreading needs a boundary interaction rule")
    operator = operator or spread_operator(rule, config, grid, kernel)
    return operator.spread((rule.values @ np.asarray(T)) * rule.weights[:, None])


def restrict_velocity(
    rule: InteractionRule,
    config: Configuration,
    u: StaggeredField,
    mass: MassMatrix,
    grid: MacGrid,
    kernel: KernelKind,
    operator: Optional[SpreadOperator] = None,
) -> np.ndarray:
    """Nodal velocities J u = M^{-1} Φ^T (ω U) with U interpolated at the interaction points."""
    operator = operator or spread_operator(rule, config, grid, kernel)
    U = operator.interpolate(u)
    return solve_mass(mass, rule.basis.T @ (U * rule.weights[:, None]))


def spread_nodal(
    mesh: FeMesh,
    config: Configuration,
    F: np.ndarray,
    mass: MassMatrix,
    grid: MacGrid,
    kernel: KernelKind,
) -> StaggeredField:
    """Direct nodal spreading Σ_l F_l V_l δ_h(x - χ_l) with V_l the mass-matrix row sums.

    Only used to compare against quadrature-based spreading.
    """
    volumes = np.asarray(mass.matrix.sum(axis=1)).ravel()
    operator = SpreadOperator(grid, config.chi, kernel)
    return operator.spread(np.asarray(F) * volumes[:, None])


class InteractionState:
    """Interaction rules and spread operators of one structure frozen at one configuration."""

    def __init__(self, structure: "ImmersedStructure", chi: np.ndarray):
        self.grid = structure.grid
        self.kernel = structure.kernel
        self.mass = structure.mass
        self.config = Configuration.at(chi)
        self.rule = structure.rule
        self.boundary_rule = structure.boundary_rule
        self.volume = spread_operator(self.rule, self.config, self.grid, self.kernel)
        self.surface = None
        if self.boundary_rule is not None:
            self.surface = spread_operator(self.boundary_rule, self.config, self.grid, self.kernel)

    def spread(self, force: LagrangianForce) -> StaggeredField:
        f = spread_volume(self.rule, self.config, force.volume, self.grid, self.kernel, self.volume)
        if force.T is not None and self.surface is not None:
            f = f + spread_surface(self.boundary_rule, self.config, force.T, self.grid, self.kernel, self.surface)
        return f

    def restrict(self, u: StaggeredField) -> np.ndarray:
        return restrict_velocity(self.rule, self.config, u, self.mass, self.grid, self.kernel, self.volume)

    def net_force(self, force: LagrangianForce) -> np.ndarray:
        """Σ_Q F(X_Q) ω_Q over the interaction points, plus the transmission term."""
        total = (self.rule.weights[:, None] * (self.rule.values @ force.volume)).sum(axis=0)
        if force.T is not None and self.boundary_rule is not None:
            total = total + (self.boundary_rule.weights[:, None] * (self.boundary_rule.values @ force.T)).sum(axis=0)
        return total


class ImmersedStructure:
    """A Lagrangian body immersed in the grid: mesh, forces, interaction rules and mass matrix.

    Elastic bodies carry a constitutive model and a formulation; rigid
    bodies carry a penalty tether instead.
    """

    def __init__(
        self,
        mesh: FeMesh,
        config: Configuration,
        grid: MacGrid,
        mass: MassMatrix,
        kernel: KernelKind = KernelKind.PESKIN_4PT,
        model: Optional[ConstitutiveModel] = None,
        formulation: Formulation = Formulation.UNIFIED,
        penalty: Optional[RigidPenalty] = None,
        density: float = 3.0,
        rebuild_threshold: float = 0.1,
    ):
        if (model is None) == (penalty is None):
            raise ValueError("A structure needs exactly one of a constitutive model or a rigid penalty")
        self.mesh = mesh
        self.config = config
        self.grid = grid
        self.mass = mass
        self.kernel = KernelKind(kernel)
        self.model = model
        self.formulation = Formulation(formulation)
        self.penalty = penalty
        self.density = density
        self.rebuild_threshold = rebuild_threshold
        self.assembler = ElasticForceAssembler(mesh, model, mass) if model is not None else None
        self.rule: Optional[InteractionRule] = None
        self.boundary_rule: Optional[InteractionRule] = None
        self.rebuilds = 0
        self.update_rules(config.chi, force=True)

    @property
    def uses_transmission(self) -> bool:
        return self.model is not None and self.formulation is Formulation.PARTITIONED

    def update_rules(self, chi: np.ndarray, force: bool = False) -> bool:
        """Rebuild the interaction rules if the structure has stretched past the threshold."""
        if not force and not self.rule.needs_rebuild(chi, self.mesh.elements):
            return False
        config = Configuration.at(chi)
        h = self.grid.h
        self.rule = build_interaction_rule(self.mesh, config, h, self.density, self.rebuild_threshold)
        if self.uses_transmission and self.mesh.boundary_facets.size:
            self.boundary_rule = build_boundary_interaction_rule(
                self.mesh, config, h, self.density, self.rebuild_threshold
            )
        self.rebuilds += 1
        if not force:
            logger.info(f"Rebuilt interaction rules ({self.rule.n_points} points, rebuild #{self.rebuilds})")
        return True

    def at(self, chi: np.ndarray) -> InteractionState:
        """Interaction operators frozen at configuration ``chi``."""
        self.update_rules(chi)
        return InteractionState(self, chi)

    def force(self, chi: np.ndarray, velocity: Optional[np.ndarray] = None) -> LagrangianForce:
        """Lagrangian force at configuration ``chi``; ``velocity`` feeds the penalty damping."""
        if self.penalty is not None:
            velocity = np.zeros_like(chi) if velocity is None else velocity
            return rigid_force(self.penalty, Configuration(chi, velocity))
        return self.assembler.assemble(chi, self.formulation)
