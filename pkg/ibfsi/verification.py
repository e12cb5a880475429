"""Quick property checks of the discretization, runnable without pytest."""

import logging
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from .coupling import build_interaction_rule, spread_nodal, spread_operator, spread_volume
from .elasticity import ConstitutiveModel, ElasticForceAssembler, pk1_gradient_check
from .fem_mesh import Configuration, assemble_mass, build_disc_mesh, build_rectangle_mesh, build_shell_mesh
from .kernels import KernelKind, stencil_weights
from .mac_grid import GridSpec, MacGrid

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)


def check_kernel_moments(seed: int = 0, samples: int = 1000) -> List[CheckResult]:
    """Partition of unity and vanishing first moment at random offsets."""
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.0, 1.0, samples) + 8.0
    results = []
    for kind in KernelKind:
        indices, weights = stencil_weights(kind, s, 1.0, 0.0, 0.0, 64, True)
        unity = np.max(np.abs(weights.sum(axis=1) - 1.0))
        moment = np.max(np.abs(np.sum(weights * (indices - s[:, None]), axis=1)))
        results.append(CheckResult(f"kernel {kind.value} sum", float(unity), 1e-13))
        results.append(CheckResult(f"kernel {kind.value} first moment", float(moment), 1e-13))
    return results


def check_adjoint(seed: int = 1, trials: int = 100, N: int = 32) -> List[CheckResult]:
    """(F, J u)_X = (S F, u)_x on perturbed disc and shell bodies in a periodic box.

    ``trials`` random (configuration, F, u) triples are drawn per body. The left
    side is evaluated as F · Φ^T (ω U), which is F · M J u without the mass solve.
    """
    rng = np.random.default_rng(seed)
    grid = MacGrid(GridSpec.periodic_box(N, N, 1.0 / N))
    disc = build_disc_mesh(0.2, (0.5, 0.5), 2.0 / N)
    shell, shell_config = build_shell_mesh(0.25, 0.0625, 2)
    bodies = {"disc": (disc, disc.nodes), "shell": (shell, shell_config.chi)}
    results = []
    for name, (mesh, chi0) in bodies.items():
        worst = 0.0
        for _ in range(trials):
            config = Configuration.at(chi0 + 0.2 * grid.h * rng.standard_normal(chi0.shape))
            rule = build_interaction_rule(mesh, config, grid.h)
            F = rng.standard_normal(chi0.shape)
            u = grid.field_from_vector(rng.standard_normal(grid.n_faces))
            for kernel in KernelKind:
                operator = spread_operator(rule, config, grid, kernel)
                U = operator.interpolate(u)
                lhs = float(np.sum(F * (rule.basis.T @ (U * rule.weights[:, None]))))
                rhs = grid.inner_product(spread_volume(rule, config, F, grid, kernel, operator), u)
                worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1e-300))
        results.append(CheckResult(f"adjoint identity {name}", worst, 1e-11))
    return results


def check_nodal_spreading(seed: int = 4, N: int = 32) -> List[CheckResult]:
    """Nodal and quadrature spreading carry the same total force."""
    rng = np.random.default_rng(seed)
    grid = MacGrid(GridSpec.periodic_box(N, N, 1.0 / N))
    mesh = build_disc_mesh(0.2, (0.5, 0.5), 2.0 / N)
    mass = assemble_mass(mesh)
    config = Configuration.identity(mesh)
    rule = build_interaction_rule(mesh, config, grid.h)
    F = rng.standard_normal(mesh.nodes.shape)
    results = []
    for kernel in KernelKind:
        nodal = spread_nodal(mesh, config, F, mass, grid, kernel)
        quadrature = spread_volume(rule, config, F, grid, kernel)
        worst = max(
            abs(nodal.u1.sum() - quadrature.u1.sum()) / max(abs(quadrature.u1.sum()), 1.0),
            abs(nodal.u2.sum() - quadrature.u2.sum()) / max(abs(quadrature.u2.sum()), 1.0),
        )
        results.append(CheckResult(f"nodal spreading total {kernel.value}", float(worst), 1e-10))
    return results


def random_deformation_gradients(rng: np.random.Generator, count: int, min_det: float = 0.5) -> np.ndarray:
    """Random 2x2 matrices near the identity with det F > ``min_det``."""
    found = []
    while len(found) < count:
        F = np.eye(2) + 0.4 * rng.standard_normal((2, 2))
        if np.linalg.det(F) > min_det:
            found.append(F)
    return np.array(found)


def check_pk1(seed: int = 2, samples: int = 50) -> List[CheckResult]:
    """Stress against finite differences of the strain energy."""
    rng = np.random.default_rng(seed)
    gradients = random_deformation_gradients(rng, samples)
    models = [
        ConstitutiveModel.anisotropic_shell(1.0, 0.0625),
        ConstitutiveModel.orthotropic_shell(1.0, 0.0625),
        ConstitutiveModel.neo_hookean_disc(0.2, 0.2),
    ]
    return [
        CheckResult(f"pk1 {model.kind.value}", max(pk1_gradient_check(model, F) for F in gradients), 1e-6)
        for model in models
    ]


def check_divergence_theorem(seed: int = 3) -> List[CheckResult]:
    """Affine deformations give no net interior force (partitioned) and zero total force (unified)."""
    rng = np.random.default_rng(seed)
    mesh = build_rectangle_mesh(0.3, 0.2, 6, 4, (0.1, 0.2))
    mass = assemble_mass(mesh)
    model = ConstitutiveModel.neo_hookean_disc(0.2, 0.2)
    assembler = ElasticForceAssembler(mesh, model, mass)
    A = random_deformation_gradients(rng, 1)[0]
    chi = mesh.nodes @ A.T + rng.standard_normal(2)
    partitioned = np.max(np.abs(assembler.partitioned(chi).F))
    total = np.max(np.abs(assembler.volume_term(chi).sum(axis=0)))
    return [
        CheckResult("partitioned interior force", float(partitioned), 1e-10),
        CheckResult("unified force sum", float(total), 1e-12),
    ]


CHECKS: List[Callable[[], List[CheckResult]]] = [
    check_kernel_moments,
    check_adjoint,
    check_nodal_spreading,
    check_pk1,
    check_divergence_theorem,
]


def run_verification() -> List[CheckResult]:
    """Run every check and log the outcome of each."""
    results = []
    for check in CHECKS:
        for result in check():
            status = "ok" if result.passed else "FAILED"
            log = logger.info if result.passed else logger.error
            log(f"{result.name}: {result.value:.3e} (tolerance {result.tolerance:.0e}) {status}")
            results.append(result)
    return results
