"""Configuration management for benchmark scenarios and convergence studies."""

import copy
import logging
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import yaml

from .elasticity import Formulation
from .exceptions import ConfigError
from .fem_mesh import MassVariant
from .kernels import KernelKind

logger = logging.getLogger(__name__)


class ScenarioKind(str, Enum):
    SHELL_ANISOTROPIC = "shell_anisotropic"
    SHELL_ORTHOTROPIC = "shell_orthotropic"
    SOFT_DISC_CAVITY = "soft_disc_cavity"
    CYLINDER_FLOW = "cylinder_flow"
    TAYLOR_GREEN = "taylor_green"

    @property
    def is_shell(self) -> bool:
        return self in (ScenarioKind.SHELL_ANISOTROPIC, ScenarioKind.SHELL_ORTHOTROPIC)


ALLOWED_M_FAC = (1, 2, 4)
MIN_SHELL_N = 32


@dataclass
class GridConfig:
    """Eulerian grid: N cells per unit length (h = 1/N)."""

    N: int = 64
    x_range: Tuple[float, float] = (0.0, 1.0)
    y_range: Tuple[float, float] = (0.0, 1.0)

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def cells(self) -> Tuple[int, int]:
        return (
            int(round((self.x_range[1] - self.x_range[0]) * self.N)),
            int(round((self.y_range[1] - self.y_range[0]) * self.N)),
        )


@dataclass
class FluidConfig:
    rho: float = 1.0
    mu: float = 0.01


@dataclass
class MaterialConfig:
    """Elastic modulus and rigid-penalty parameters.

    ``kappa`` and ``eta`` default to the stability-scaled penalty values
    when left unset.
    """

    mu_e: float = 1.0
    p0_factor: float = 0.0
    kappa: Optional[float] = None
    eta: Optional[float] = None
    penalty_safety: float = 0.5


@dataclass
class StructureConfig:
    """Immersed body geometry and discretization."""

    M_fac: int = 2
    radius: float = 0.25
    thickness: float = 0.0625
    center: Tuple[float, float] = (0.5, 0.5)
    gamma: float = 0.0
    formulation: Formulation = Formulation.UNIFIED
    mass: MassVariant = MassVariant.CONSISTENT


@dataclass
class CouplingConfig:
    kernel: KernelKind = KernelKind.PESKIN_4PT
    density: float = 3.0
    rebuild_threshold: float = 0.1


@dataclass
class TimeConfig:
    """Time stepping: Δt = dt_factor · h."""

    dt_factor: float = 0.25
    t_end: float = 1.0
    output_every: int = 10
    cfl_max: float = 0.5
    tol: float = 1e-9


@dataclass
class OutputConfig:
    directory: str = "results"
    dump_fields: bool = True
    dump_mesh: bool = True
    show_progress: bool = False


SECTIONS = {
    "grid": GridConfig,
    "fluid": FluidConfig,
    "material": MaterialConfig,
    "structure": StructureConfig,
    "coupling": CouplingConfig,
    "time": TimeConfig,
    "output": OutputConfig,
}


SCENARIO_DEFAULTS: Dict[ScenarioKind, Dict[str, Dict[str, Any]]] = {
    ScenarioKind.SHELL_ANISOTROPIC: {
        "fluid": {"mu": 1.0},
        "material": {"mu_e": 1.0},
        "structure": {"radius": 0.25, "thickness": 0.0625, "center": (0.5, 0.5)},
        "time": {"dt_factor": 0.25, "t_end": 3.0},
    },
    ScenarioKind.SHELL_ORTHOTROPIC: {
        "fluid": {"mu": 1.0},
        "material": {"mu_e": 1.0},
        "structure": {"radius": 0.25, "thickness": 0.0625, "center": (0.5, 0.5)},
        "time": {"dt_factor": 0.25, "t_end": 3.0},
    },
    ScenarioKind.SOFT_DISC_CAVITY: {
        "fluid": {"mu": 0.01},
        "material": {"mu_e": 0.2},
        "structure": {"radius": 0.2, "center": (0.6, 0.5), "formulation": "partitioned"},
        "time": {"dt_factor": 0.125, "t_end": 10.0},
    },
    ScenarioKind.CYLINDER_FLOW: {
        "grid": {"N": 20, "x_range": (-8.0, 24.0), "y_range": (-16.0, 16.0)},
        "fluid": {"mu": 0.005},
        "structure": {"radius": 0.5, "center": (0.0, 0.0)},
        "time": {"dt_factor": 0.1, "t_end": 200.0, "output_every": 20},
    },
    ScenarioKind.TAYLOR_GREEN: {
        "fluid": {"mu": 0.01},
        "time": {"dt_factor": 0.25, "t_end": 0.1, "output_every": 1},
    },
}


def _coerce(value: Any, default: Any, key: str, line: Optional[int]) -> Any:
    """Convert a parsed YAML value to the type of a dataclass default."""
    if isinstance(default, Enum):
        try:
            return type(default)(value)
        except ValueError:
            choices = [member.value for member in type(default)]
            raise ConfigError(f"Invalid value {value!r}, expected one of {choices}", key, line) from None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"Expected a boolean, got {value!r}", key, line)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"Expected an integer, got {value!r}", key, line)
        return value
    if isinstance(default, float) or default is None:
        if value is None and default is None:
            return None
        if isinstance(value, str):
            # YAML 1.1 reads "1e-9" (no decimal point) as a string
            try:
                return float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"Expected a number, got {value!r}", key, line)
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or len(value) != len(default):
            raise ConfigError(f"Expected a list of {len(default)} numbers, got {value!r}", key, line)
        return tuple(_coerce(v, d, key, line) for v, d in zip(value, default))
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"Expected a string, got {value!r}", key, line)
        return value
    return value


def key_lines(node: yaml.Node, prefix: str = "") -> Dict[str, int]:
    """Map dotted keys of a composed YAML mapping to 1-based line numbers."""
    lines: Dict[str, int] = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = f"{prefix}{key_node.value}"
            lines[key] = key_node.start_mark.line + 1
            lines.update(key_lines(value_node, f"{key}."))
    return lines


def load_yaml(path: Union[str, Path]) -> Tuple[Dict[str, Any], Dict[str, int]]:
    """Parse a YAML mapping and the line numbers of its keys.

    Raises:
        ConfigError: If the file is missing, malformed, or not a mapping
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"Cannot read configuration file {path}: {e}") from e
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"Malformed YAML in {path}: {e}", line=mark.line + 1 if mark else None) from e
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"Configuration file {path} must contain a mapping")
    return data, key_lines(node) if node is not None else {}


def _build_section(cls, values: Mapping[str, Any], base, name: str, lines: Mapping[str, int]):
    known = {f.name: f for f in fields(cls)}
    kwargs = {f: getattr(base, f) for f in known}
    for key, value in values.items():
        dotted = f"{name}.{key}"
        if key not in known:
            raise ConfigError(f"Unknown key '{key}' in section '{name}'", dotted, lines.get(dotted))
        kwargs[key] = _coerce(value, getattr(base, key), dotted, lines.get(dotted))
    return cls(**kwargs)


@dataclass
class ScenarioConfig:
    """Complete configuration of one benchmark run."""

    scenario: ScenarioKind
    grid: GridConfig = field(default_factory=GridConfig)
    fluid: FluidConfig = field(default_factory=FluidConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    structure: StructureConfig = field(default_factory=StructureConfig)
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def dt(self) -> float:
        return self.time.dt_factor * self.grid.h

    @property
    def lagrangian_spacing(self) -> float:
        return self.structure.M_fac * self.grid.h

    @classmethod
    def for_scenario(
        cls,
        scenario: Union[str, ScenarioKind],
        overrides: Optional[Mapping[str, Mapping[str, Any]]] = None,
        lines: Optional[Mapping[str, int]] = None,
    ) -> "ScenarioConfig":
        """Scenario defaults with per-section overrides applied and validated.

        Args:
            scenario: Scenario name
            overrides: Mapping of section name to field values
            lines: Optional line numbers of dotted keys for diagnostics

        Returns:
            Validated configuration

        Raises:
            ConfigError: On unknown sections, keys, or invalid values
        """
        lines = lines or {}
        try:
            kind = ScenarioKind(scenario)
        except ValueError:
            choices = [k.value for k in ScenarioKind]
            raise ConfigError(f"Unknown scenario {scenario!r}, expected one of {choices}", "scenario", lines.get("scenario")) from None
        overrides = dict(overrides or {})
        sections = {}
        for name, cls_ in SECTIONS.items():
            base = _build_section(cls_, SCENARIO_DEFAULTS[kind].get(name, {}), cls_(), name, {})
            values = overrides.pop(name, None) or {}
            if not isinstance(values, Mapping):
                raise ConfigError(f"Section '{name}' must be a mapping", name, lines.get(name))
            sections[name] = _build_section(cls_, values, base, name, lines)
        if overrides:
            name = sorted(overrides)[0]
            raise ConfigError(f"Unknown section '{name}'", name, lines.get(name))
        config = cls(scenario=kind, **sections)
        config.validate(lines)
        return config

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], lines: Optional[Mapping[str, int]] = None) -> "ScenarioConfig":
        data = dict(data)
        if "scenario" not in data:
            raise ConfigError("Missing required key 'scenario'", "scenario")
        scenario = data.pop("scenario")
        return cls.for_scenario(scenario, data, lines)

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "ScenarioConfig":
        data, lines = load_yaml(path)
        config = cls.from_mapping(data, lines)
        logger.info(f"Loaded {config.scenario.value} configuration from {path}")
        return config

    def validate(self, lines: Optional[Mapping[str, int]] = None) -> None:
        """Check parameter ranges.

        Raises:
            ConfigError: Naming the offending dotted key
        """
        lines = lines or {}

        def fail(message: str, key: str):
            raise ConfigError(message, key, lines.get(key))

        N = self.grid.N
        if N < 4:
            fail(f"Grid resolution must be at least 4, got {N}", "grid.N")
        if self.scenario.is_shell and (N < MIN_SHELL_N or N & (N - 1)):
            fail(f"Shell scenarios need N a power of two >= {MIN_SHELL_N}, got {N}", "grid.N")
        if self.structure.M_fac not in ALLOWED_M_FAC:
            fail(f"M_fac must be one of {ALLOWED_M_FAC}, got {self.structure.M_fac}", "structure.M_fac")
        if self.scenario.is_shell and N // (16 * self.structure.M_fac) < 2:
            fail(f"N={N} with M_fac={self.structure.M_fac} leaves fewer than 2 shell elements through the thickness", "structure.M_fac")
        for axis in ("x_range", "y_range"):
            low, high = getattr(self.grid, axis)
            if not high > low:
                fail(f"Empty domain range {low}..{high}", f"grid.{axis}")
        n1, n2 = self.grid.cells
        if abs(n1 * self.h - (self.grid.x_range[1] - self.grid.x_range[0])) > 1e-9 or abs(
            n2 * self.h - (self.grid.y_range[1] - self.grid.y_range[0])
        ) > 1e-9:
            fail("Domain extents must be whole multiples of h = 1/N", "grid.N")
        for key, value in (
            ("fluid.rho", self.fluid.rho),
            ("fluid.mu", self.fluid.mu),
            ("time.dt_factor", self.time.dt_factor),
            ("time.cfl_max", self.time.cfl_max),
            ("time.tol", self.time.tol),
            ("coupling.density", self.coupling.density),
            ("coupling.rebuild_threshold", self.coupling.rebuild_threshold),
            ("structure.radius", self.structure.radius),
            ("material.penalty_safety", self.material.penalty_safety),
        ):
            if not value > 0:
                fail(f"Value must be positive, got {value}", key)
        if self.time.t_end < 0:
            fail(f"End time must be non-negative, got {self.time.t_end}", "time.t_end")
        if self.time.output_every < 1:
            fail(f"output_every must be at least 1, got {self.time.output_every}", "time.output_every")
        if self.scenario is not ScenarioKind.CYLINDER_FLOW and not self.material.mu_e > 0:
            fail(f"Shear modulus must be positive, got {self.material.mu_e}", "material.mu_e")
        if self.scenario.is_shell and not self.structure.thickness > 0:
            fail(f"Shell thickness must be positive, got {self.structure.thickness}", "structure.thickness")
        for key in ("kappa", "eta"):
            value = getattr(self.material, key)
            if value is not None and value < 0:
                fail(f"Penalty parameter must be non-negative, got {value}", f"material.{key}")

    def to_dict(self) -> Dict[str, Any]:
        """Plain mapping suitable for YAML output."""

        def plain(value):
            if isinstance(value, Enum):
                return value.value
            if isinstance(value, tuple):
                return [plain(v) for v in value]
            if isinstance(value, dict):
                return {k: plain(v) for k, v in value.items()}
            return value

        data = {"scenario": self.scenario.value}
        for name in SECTIONS:
            data[name] = plain(asdict(getattr(self, name)))
        return data

    def with_overrides(self, **sections: Mapping[str, Any]) -> "ScenarioConfig":
        """Copy with some section fields replaced, re-validated."""
        data = self.to_dict()
        for name, values in sections.items():
            data.setdefault(name, {}).update(values)
        return ScenarioConfig.from_mapping(data)


REFERENCE_KINDS = ("exact", "richardson")
SWEEP_KEYS = ("N", "M_fac", "formulation")


@dataclass
class StudyConfig:
    """Grid / M_fac / formulation sweep around a base scenario."""

    base: ScenarioConfig
    N: List[int] = field(default_factory=lambda: [64, 128, 256])
    M_fac: List[int] = field(default_factory=lambda: [2])
    formulation: List[Formulation] = field(default_factory=list)
    reference: str = "exact"
    parallel: bool = False
    output_dir: str = "results/study"

    def validate(self, lines: Optional[Mapping[str, int]] = None) -> None:
        lines = lines or {}
        if self.reference not in REFERENCE_KINDS:
            raise ConfigError(
                f"reference must be one of {REFERENCE_KINDS}, got {self.reference!r}", "reference", lines.get("reference")
            )
        needed = 3 if self.reference == "richardson" else 2
        Ns = sorted(self.N)
        if len(Ns) < needed:
            raise ConfigError(f"A {self.reference} study needs at least {needed} resolutions", "sweep.N", lines.get("sweep.N"))
        if any(b != 2 * a for a, b in zip(Ns, Ns[1:])):
            raise ConfigError(f"Resolutions must double successively, got {Ns}", "sweep.N", lines.get("sweep.N"))
        if self.reference == "exact" and not self.base.scenario.is_shell:
            raise ConfigError(
                "Exact references exist only for static shell scenarios", "reference", lines.get("reference")
            )
        for N in Ns:
            for M_fac in self.M_fac:
                self.base.with_overrides(grid={"N": N}, structure={"M_fac": M_fac})

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "StudyConfig":
        """Read a study file.

        ``base`` is either an inline scenario mapping or a path to a scenario
        file (relative to the study file).
        """
        path = Path(path)
        data, lines = load_yaml(path)
        unknown = set(data) - {"base", "sweep", "reference", "parallel", "output_dir"}
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"Unknown study key '{key}'", key, lines.get(key))
        if "base" not in data:
            raise ConfigError("Missing required key 'base'", "base")
        base = data["base"]
        if isinstance(base, str):
            base = ScenarioConfig.from_yaml(path.parent / base)
        elif isinstance(base, Mapping):
            base_lines = {k[len("base.") :]: v for k, v in lines.items() if k.startswith("base.")}
            base = ScenarioConfig.from_mapping(base, base_lines)
        else:
            raise ConfigError("'base' must be a path or a mapping", "base", lines.get("base"))

        sweep = data.get("sweep") or {}
        if not isinstance(sweep, Mapping):
            raise ConfigError("'sweep' must be a mapping", "sweep", lines.get("sweep"))
        kwargs: Dict[str, Any] = {"base": base}
        for key, values in sweep.items():
            dotted = f"sweep.{key}"
            if key not in SWEEP_KEYS:
                raise ConfigError(f"Unknown sweep key '{key}'", dotted, lines.get(dotted))
            if not isinstance(values, list) or not values:
                raise ConfigError("Sweep values must be a non-empty list", dotted, lines.get(dotted))
            if key == "formulation":
                kwargs[key] = [_coerce(v, Formulation.UNIFIED, dotted, lines.get(dotted)) for v in values]
            else:
                kwargs[key] = [_coerce(v, 0, dotted, lines.get(dotted)) for v in values]
        for key, default in (("reference", "exact"), ("parallel", False), ("output_dir", "results/study")):
            if key in data:
                kwargs[key] = _coerce(data[key], default, key, lines.get(key))
        study = cls(**kwargs)
        study.validate(lines)
        return study

    @property
    def formulations(self) -> List[Formulation]:
        return list(self.formulation) or [self.base.structure.formulation]


def dump_yaml(data: Mapping[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(copy.deepcopy(dict(data)), f, default_flow_style=False, sort_keys=False)
    return path
