"""Immersed-boundary fluid-structure interaction with finite element structures on a staggered grid."""

from .config import ScenarioConfig, ScenarioKind, StudyConfig
from .coupling import ImmersedStructure
from .diagnostics import DiagnosticsSeries, FlowDiagnostics
from .elasticity import ConstitutiveModel, Formulation, MaterialKind, RigidPenalty
from .exceptions import (
    CFLViolation,
    ConfigError,
    IBFSIError,
    InteractionRuleError,
    InvertedElementError,
    SolverFailure,
)
from .fem_mesh import Configuration, ElementKind, FeMesh
from .ins_solver import FluidParams, FluidStructureIntegrator
from .kernels import KernelKind
from .mac_grid import BoundaryCondition, CellField, GridSpec, MacGrid, StaggeredField
from .scenarios import ScenarioRunner, run_scenario
from .study import ConvergenceStudy

__version__ = "0.1.0"
__all__ = [
    "BoundaryCondition",
    "CellField",
    "CFLViolation",
    "ConfigError",
    "Configuration",
    "ConstitutiveModel",
    "ConvergenceStudy",
    "DiagnosticsSeries",
    "ElementKind",
    "FeMesh",
    "FlowDiagnostics",
    "FluidParams",
    "FluidStructureIntegrator",
    "Formulation",
    "GridSpec",
    "IBFSIError",
    "ImmersedStructure",
    "InteractionRuleError",
    "InvertedElementError",
    "KernelKind",
    "MacGrid",
    "MaterialKind",
    "RigidPenalty",
    "ScenarioConfig",
    "ScenarioKind",
    "ScenarioRunner",
    "SolverFailure",
    "StaggeredField",
    "StudyConfig",
    "run_scenario",
]
