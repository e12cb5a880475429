"""Constitutive models and Lagrangian force assembly."""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from .exceptions import InvertedElementError
from .fem_mesh import (
    Configuration,
    ElementGeometry,
    FacetGeometry,
    FeMesh,
    MassMatrix,
    Quadrature,
    boundary_mass,
    deformation_gradients,
    solve_mass,
)

logger = logging.getLogger(__name__)

FD_STEP = 1e-6


class MaterialKind(str, Enum):
    ANISOTROPIC_SHELL = "anisotropic_shell"
    ORTHOTROPIC_SHELL = "orthotropic_shell"
    NEO_HOOKEAN_DISC = "neo_hookean_disc"


class Formulation(str, Enum):
    """Weak form of the elastic force: one volumetric density, or interior plus transmission."""

    UNIFIED = "unified"
    PARTITIONED = "partitioned"


def _determinants(F: np.ndarray) -> np.ndarray:
    return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]


def _require_positive(J: np.ndarray) -> None:
    bad = np.argwhere(~(np.asarray(J) > 0.0))
    if bad.size:
        index = tuple(bad[0])
        raise InvertedElementError(int(index[0]) if index else 0, float(np.asarray(J)[index]))


@dataclass(frozen=True)
class ConstitutiveModel:
    """Hyperelastic material with first Piola-Kirchhoff stress P = dW/dF.

    Shell models divide the modulus by the shell thickness ``w``. The disc
    model carries a volumetric penalty ``p0`` entering through -p0 F^{-T}.
    """

    kind: MaterialKind
    mu: float
    w: float = 1.0
    p0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", MaterialKind(self.kind))
        if not self.mu > 0:
            raise ValueError(f"Shear modulus must be positive, got mu={self.mu}")
        if not self.w > 0:
            raise ValueError(f"Shell thickness must be positive, got w={self.w}")

    @classmethod
    def anisotropic_shell(cls, mu: float, w: float) -> "ConstitutiveModel":
        return cls(MaterialKind.ANISOTROPIC_SHELL, mu, w=w)

    @classmethod
    def orthotropic_shell(cls, mu: float, w: float) -> "ConstitutiveModel":
        return cls(MaterialKind.ORTHOTROPIC_SHELL, mu, w=w)

    @classmethod
    def neo_hookean_disc(cls, mu: float, p0: float = 0.0) -> "ConstitutiveModel":
        return cls(MaterialKind.NEO_HOOKEAN_DISC, mu, p0=p0)

    @property
    def modulus(self) -> float:
        """Stress scale of the model (mu/w for shells, mu for the disc)."""
        if self.kind is MaterialKind.NEO_HOOKEAN_DISC:
            return self.mu
        return self.mu / self.w

    def pk1(self, F: np.ndarray) -> np.ndarray:
        """First Piola-Kirchhoff stress for deformation gradient(s) of shape (..., 2, 2).

        Raises:
            InvertedElementError: If the disc model needs F^{-T} and det F <= 0;
                the element is the index along the first axis
        """
        F = np.asarray(F, dtype=float)
        if self.kind is MaterialKind.ANISOTROPIC_SHELL:
            P = np.zeros_like(F)
            P[..., :, 0] = F[..., :, 0]
            return self.modulus * P
        if self.kind is MaterialKind.ORTHOTROPIC_SHELL:
            return self.modulus * F
        P = self.mu * F
        if self.p0 != 0.0:
            J = _determinants(F)
            _require_positive(J)
            inv_t = np.empty_like(F)
            inv_t[..., 0, 0] = F[..., 1, 1] / J
            inv_t[..., 1, 1] = F[..., 0, 0] / J
            inv_t[..., 0, 1] = -F[..., 1, 0] / J
            inv_t[..., 1, 0] = -F[..., 0, 1] / J
            P = P - self.p0 * inv_t
        return P

    def strain_energy(self, F: np.ndarray) -> np.ndarray:
        """Strain energy density W(F) per unit reference volume."""
        F = np.asarray(F, dtype=float)
        if self.kind is MaterialKind.ANISOTROPIC_SHELL:
            return 0.5 * self.modulus * (F[..., 0, 0] ** 2 + F[..., 1, 0] ** 2)
        I1 = np.sum(F**2, axis=(-2, -1))
        if self.kind is MaterialKind.ORTHOTROPIC_SHELL:
            return 0.5 * self.modulus * I1
        W = 0.5 * self.mu * I1
        if self.p0 != 0.0:
            J = _determinants(F)
            _require_positive(J)
            W = W - self.p0 * np.log(J)
        return W

    def scaled(self, factor: float) -> "ConstitutiveModel":
        """Same material with modulus and volumetric penalty scaled by ``factor``."""
        return ConstitutiveModel(self.kind, self.mu * factor, self.w, self.p0 * factor)


def pk1_gradient_check(model: ConstitutiveModel, F: np.ndarray, step: float = FD_STEP) -> float:
    """Maximum relative deviation between P and central differences of W.

    Args:
        model: Constitutive model
        F: A single 2x2 deformation gradient
        step: Finite-difference step

    Returns:
        max |P - P_fd| / max(max |P|, modulus)
    """
    F = np.asarray(F, dtype=float).reshape(2, 2)
    P = model.pk1(F)
    P_fd = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            dF = np.zeros((2, 2))
            dF[i, j] = step
            P_fd[i, j] = (model.strain_energy(F + dF) - model.strain_energy(F - dF)) / (2.0 * step)
    scale = max(float(np.max(np.abs(P))), model.modulus)
    return float(np.max(np.abs(P - P_fd)) / scale)


@dataclass(frozen=True)
class RigidPenalty:
    """Tether force kappa (anchor - chi) - eta dchi/dt approximating a rigid constraint."""

    kappa: float
    eta: float
    anchor: np.ndarray

    def __post_init__(self):
        if self.kappa < 0 or self.eta < 0:
            raise ValueError(f"Penalty parameters must be non-negative, got kappa={self.kappa}, eta={self.eta}")

    @classmethod
    def default(cls, anchor: np.ndarray, rho: float, h: float, dt: float, safety: float = 0.5) -> "RigidPenalty":
        """Penalty scaled to the explicit stability limits of the fluid step."""
        return cls(kappa=safety * 0.25 * rho * h / dt**2, eta=safety * 0.25 * rho * h / dt, anchor=np.asarray(anchor))


@dataclass
class LagrangianForce:
    """Nodal force-density coefficients.

    Partitioned forces populate ``F`` (all nodes) and ``T`` (boundary nodes,
    listed in ``boundary_nodes``); unified forces populate ``G``. Penalty
    forces populate ``F`` only.
    """

    F: Optional[np.ndarray] = None
    T: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    boundary_nodes: Optional[np.ndarray] = None

    @property
    def volume(self) -> np.ndarray:
        """The force density spread over the structure volume (F or G)."""
        if self.G is not None:
            return self.G
        if self.F is None:
            raise ValueError("Lagrangian force has no volumetric density")
        return self.F

    def is_finite(self) -> bool:
        return all(a is None or bool(np.all(np.isfinite(a))) for a in (self.F, self.T, self.G))


def rigid_force(penalty: RigidPenalty, config: Configuration) -> LagrangianForce:
    """Nodal penalty force; coefficients are defined pointwise, so no mass solve."""
    if penalty.anchor.shape != config.chi.shape:
        raise ValueError(f"Anchor shape {penalty.anchor.shape} does not match configuration {config.chi.shape}")
    return LagrangianForce(F=penalty.kappa * (penalty.anchor - config.chi) - penalty.eta * config.dchi_dt)


def _scatter(elements: np.ndarray, local: np.ndarray, n_nodes: int) -> np.ndarray:
    """Sum element-local vectors (ne, nen, 2) into nodes in a fixed order."""
    flat = elements.ravel()
    return np.stack(
        [np.bincount(flat, weights=local[..., k].ravel(), minlength=n_nodes) for k in range(2)], axis=-1
    )


class ElasticForceAssembler:
    """Assemble elastic force densities for one mesh and material.

    Geometry at the assembly quadrature points is computed once and reused
    for every configuration.
    """

    def __init__(self, mesh: FeMesh, model: ConstitutiveModel, mass: MassMatrix):
        if mesh.kind.reference_dim != 2:
            raise ValueError(f"Elastic forces need a two-dimensional mesh, got {mesh.kind.value}")
        self.mesh = mesh
        self.model = model
        self.mass = mass
        self.geometry = ElementGeometry.build(mesh, Quadrature.assembly(mesh.kind))

    @cached_property
    def facets(self) -> FacetGeometry:
        return FacetGeometry.build(self.mesh, Quadrature.assembly(self.mesh.kind.facet_kind))

    @cached_property
    def _boundary(self) -> Tuple[MassMatrix, np.ndarray]:
        return boundary_mass(self.mesh)

    def volume_term(self, chi: np.ndarray) -> np.ndarray:
        """B_m = -∫ P ∇φ_m dX, shape (n_nodes, 2)."""
        P = self.model.pk1(deformation_gradients(self.mesh, self.geometry, chi))
        local = -np.einsum("eqij,eqnj,eq->eni", P, self.geometry.dphi_dX, self.geometry.JxW)
        return _scatter(self.mesh.elements, local, self.mesh.n_nodes)

    def _boundary_traction(self, chi: np.ndarray) -> np.ndarray:
        """P N at every boundary facet quadrature point, shape (nf, nq, 2)."""
        facet_elements = self.mesh.boundary_facets[:, 0]
        F = np.einsum("fnk,fqnj->fqkj", np.asarray(chi)[self.mesh.elements[facet_elements]], self.facets.dphi_dX)
        try:
            P = self.model.pk1(F)
        except InvertedElementError as err:
            raise InvertedElementError(int(facet_elements[err.element]), err.jacobian) from err
        return np.einsum("fqij,fqj->fqi", P, self.facets.normals)

    def surface_term(self, chi: np.ndarray) -> np.ndarray:
        """∫ (P N) φ_m dA over the boundary facets, shape (n_nodes, 2)."""
        if self.mesh.boundary_facets.size == 0:
            return np.zeros((self.mesh.n_nodes, 2))
        PN = self._boundary_traction(chi)
        local = np.einsum("fqi,fqn,fq->fni", PN, self.facets.phi_volume, self.facets.JxW)
        return _scatter(self.mesh.elements[self.mesh.boundary_facets[:, 0]], local, self.mesh.n_nodes)

    def transmission(self, chi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Boundary L2 projection of T = -P N; returns (T, boundary node ids)."""
        mass, nodes = self._boundary
        if self.mesh.boundary_facets.size == 0:
            return np.zeros((0, 2)), nodes
        PN = self._boundary_traction(chi)
        local_ids = np.searchsorted(nodes, self.mesh.facet_nodes())
        local = -np.einsum("fqi,qa,fq->fai", PN, self.facets.phi_facet, self.facets.JxW)
        rhs = _scatter(local_ids, local, len(nodes))
        return solve_mass(mass, rhs), nodes

    def partitioned(self, chi: np.ndarray) -> LagrangianForce:
        B = self.volume_term(chi) + self.surface_term(chi)
        T, nodes = self.transmission(chi)
        return LagrangianForce(F=solve_mass(self.mass, B), T=T, boundary_nodes=nodes)

    def unified(self, chi: np.ndarray) -> LagrangianForce:
        return LagrangianForce(G=solve_mass(self.mass, self.volume_term(chi)))

    def assemble(self, chi: np.ndarray, formulation: Formulation) -> LagrangianForce:
        if Formulation(formulation) is Formulation.PARTITIONED:
            return self.partitioned(chi)
        return self.unified(chi)


def assemble_partitioned(
    mesh: FeMesh, config: Configuration, model: ConstitutiveModel, mass: MassMatrix
) -> LagrangianForce:
    """Interior force F = M^{-1} B with volume and surface terms, plus transmission T = -P N."""
    return ElasticForceAssembler(mesh, model, mass).partitioned(config.chi)


def assemble_unified(
    mesh: FeMesh, config: Configuration, model: ConstitutiveModel, mass: MassMatrix
) -> LagrangianForce:
    """Unified force density G = M^{-1} B with the volume term only."""
    return ElasticForceAssembler(mesh, model, mass).unified(config.chi)
