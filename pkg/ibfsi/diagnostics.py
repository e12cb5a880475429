"""Error norms, convergence orders and benchmark quantities."""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.signal import periodogram

from .elasticity import MaterialKind
from .exceptions import InvertedElementError
from .fem_mesh import Configuration, ElementGeometry, FeMesh, Quadrature, deformation_gradients
from .mac_grid import CellField, GridSpec, MacGrid, StaggeredField

logger = logging.getLogger(__name__)

NORMS = ("L1", "L2", "Linf")
SERIES_COLUMNS = ("t", "CL", "CD", "volume", "ke", "umax")

Field = Union[StaggeredField, CellField]


class FlowDiagnostics:
    """Diagnostics computed from grid fields and structure states."""

    @staticmethod
    def shell_exact_pressure(
        kind: MaterialKind,
        R: float,
        w: float,
        mu_e: float,
        x: np.ndarray,
        y: np.ndarray,
        center=(0.5, 0.5),
    ) -> np.ndarray:
        """Static (equilibrium) pressure of a thick circular shell with zero-mean gauge.

        Args:
            kind: ANISOTROPIC_SHELL or ORTHOTROPIC_SHELL
            R: Inner radius
            w: Thickness
            mu_e: Shear modulus
            x, y: Evaluation points
            center: Shell center

        Returns:
            Pressure at the points
        """
        kind = MaterialKind(kind)
        r = np.hypot(np.asarray(x) - center[0], np.asarray(y) - center[1])
        p0 = FlowDiagnostics.shell_pressure_offset(kind, R, w, mu_e)
        inside = r <= R
        shell = (r > R) & (r <= R + w)
        if kind is MaterialKind.ANISOTROPIC_SHELL:
            interior = mu_e / R
            layer = mu_e / w * (R + w - r) / R
        elif kind is MaterialKind.ORTHOTROPIC_SHELL:
            interior = mu_e * (1.0 / R - 1.0 / (R + w))
            layer = mu_e / w * ((R + w - r) / R + R / (R + w))
        else:
            raise ValueError(f"No static shell solution for material {kind.value}")
        return p0 + np.where(inside, interior, np.where(shell, layer, 0.0))

    @staticmethod
    def shell_pressure_offset(kind: MaterialKind, R: float, w: float, mu_e: float) -> float:
        """Exterior pressure p0 of the static shell solution."""
        kind = MaterialKind(kind)
        if kind is MaterialKind.ANISOTROPIC_SHELL:
            return np.pi * mu_e / (3.0 * w) * (R**2 - (R + w) ** 3 / R)
        return np.pi * mu_e / (3.0 * w) * (3.0 * w * R + R**2 - (R + w) ** 3 / R)

    @staticmethod
    def shell_pressure_jump(kind: MaterialKind, R: float, w: float, mu_e: float) -> float:
        """Interior-minus-exterior pressure of the static shell solution."""
        if MaterialKind(kind) is MaterialKind.ANISOTROPIC_SHELL:
            return mu_e / R
        return mu_e * (1.0 / R - 1.0 / (R + w))

    @staticmethod
    def interior_pressure(p: CellField, grid: MacGrid, radius: float, center=(0.5, 0.5)) -> float:
        """Mean pressure over cells whose centers lie within ``radius`` of ``center``."""
        x, y = grid.cell_coordinates()
        mask = np.hypot(x - center[0], y - center[1]) < radius
        if not np.any(mask):
            raise ValueError(f"No cells inside radius {radius}")
        return float(p.values[mask].mean())

    @staticmethod
    def error_norms(computed: Field, reference: Field, grid: MacGrid) -> Dict[str, float]:
        """Discrete L1, L2 and L∞ norms of ``computed - reference``.

        L1 and L2 weight each value by h² (faces on non-periodic boundaries by h²/2).

        Returns:
            Dictionary with keys L1, L2, Linf
        """
        if isinstance(computed, StaggeredField) and isinstance(reference, StaggeredField):
            error = grid.full_vector(computed) - grid.full_vector(reference)
            weights = grid.face_weights
        elif isinstance(computed, CellField) and isinstance(reference, CellField):
            grid.check_cells(computed)
            grid.check_cells(reference)
            error = (computed.values - reference.values).ravel()
            weights = np.ones_like(error)
        else:
            raise ValueError("Error norms need two fields of the same kind")
        h2 = grid.h**2
        return {
            "L1": float(np.sum(np.abs(error) * weights) * h2),
            "L2": float(np.sqrt(np.sum(error**2 * weights) * h2)),
            "Linf": float(np.max(np.abs(error))) if error.size else 0.0,
        }

    @staticmethod
    def nodal_error_norms(computed: np.ndarray, reference: np.ndarray) -> Dict[str, float]:
        """Norms of the nodal position error |χ - χ_ref| (mean-weighted L1 and L2)."""
        computed = np.asarray(computed, dtype=float)
        reference = np.asarray(reference, dtype=float)
        if computed.shape != reference.shape:
            raise ValueError(f"Nodal arrays differ in shape: {computed.shape} vs {reference.shape}")
        distance = np.linalg.norm(computed - reference, axis=-1)
        return {
            "L1": float(np.mean(distance)),
            "L2": float(np.sqrt(np.mean(distance**2))),
            "Linf": float(np.max(distance)),
        }

    @staticmethod
    def restrict(field: Field, fine: GridSpec) -> Field:
        """Average a field from a grid onto the grid with twice the spacing.

        Raises:
            ValueError: If the fine grid cannot be coarsened by two
        """
        if fine.n1 % 2 or fine.n2 % 2:
            raise ValueError(f"Grid {fine.n1}x{fine.n2} cannot be coarsened by a factor of two")
        if isinstance(field, CellField):
            v = field.values
            return CellField(0.25 * (v[0::2, 0::2] + v[1::2, 0::2] + v[0::2, 1::2] + v[1::2, 1::2]))
        u1 = field.u1[0::2]
        u2 = field.u2[:, 0::2]
        return StaggeredField(0.5 * (u1[:, 0::2] + u1[:, 1::2]), 0.5 * (u2[0::2] + u2[1::2]))

    @staticmethod
    def coarsened(spec: GridSpec) -> GridSpec:
        return GridSpec(spec.n1 // 2, spec.n2 // 2, 2.0 * spec.h, spec.origin, spec.bc)

    @staticmethod
    def richardson_order(coarse: Field, medium: Field, fine: Field, coarse_grid: GridSpec) -> Dict[str, float]:
        """Observed convergence order from solutions on nested grids N, 2N, 4N.

        The errors e_N = q_N - R(q_2N) and e_2N = q_2N - R(q_4N) use restriction
        by averaging; the order is log2(‖e_N‖ / ‖e_2N‖) per norm. Undefined
        ratios return NaN with a warning.
        """
        medium_grid = GridSpec(coarse_grid.n1 * 2, coarse_grid.n2 * 2, coarse_grid.h / 2.0, coarse_grid.origin, coarse_grid.bc)
        fine_grid = GridSpec(medium_grid.n1 * 2, medium_grid.n2 * 2, medium_grid.h / 2.0, medium_grid.origin, medium_grid.bc)
        coarse_mac = MacGrid(coarse_grid)
        medium_mac = MacGrid(medium_grid)
        try:
            e_coarse = FlowDiagnostics.error_norms(coarse, FlowDiagnostics.restrict(medium, medium_grid), coarse_mac)
            e_medium = FlowDiagnostics.error_norms(medium, FlowDiagnostics.restrict(fine, fine_grid), medium_mac)
        except ValueError as err:
            raise ValueError(f"Inputs are not nested solutions on N, 2N, 4N grids: {err}") from err
        return FlowDiagnostics.orders_from_errors(e_coarse, e_medium)

    @staticmethod
    def orders_from_errors(coarse: Mapping[str, float], fine: Mapping[str, float], ratio: float = 2.0) -> Dict[str, float]:
        """Convergence order log_ratio(e_coarse / e_fine) per norm, NaN when undefined."""
        orders = {}
        for norm in NORMS:
            a, b = coarse[norm], fine[norm]
            if a > 0.0 and b > 0.0:
                orders[norm] = float(np.log(a / b) / np.log(ratio))
            else:
                logger.warning(f"Convergence order undefined for {norm} (errors {a:.3e}, {b:.3e})")
                orders[norm] = float("nan")
        return orders

    @staticmethod
    def structure_volume(mesh: FeMesh, config: Configuration) -> float:
        """Deformed area Σ_e Σ_q det F(X_q) ω_q over the assembly quadrature.

        Raises:
            InvertedElementError: If det F <= 0 at any quadrature point
        """
        geometry = ElementGeometry.build(mesh, Quadrature.assembly(mesh.kind))
        F = deformation_gradients(mesh, geometry, config.chi)
        J = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
        bad = np.argwhere(J <= 0.0)
        if bad.size:
            raise InvertedElementError(int(bad[0, 0]), float(J[tuple(bad[0])]))
        return float(np.sum(J * geometry.JxW))

    @staticmethod
    def lift_drag(net_penalty_force: np.ndarray, rho: float, u_inf: float, d: float) -> Dict[str, float]:
        """Fluid force on a tethered body and its coefficients.

        Args:
            net_penalty_force: Σ_Q F(X_Q) ω_Q of the penalty force density
            rho: Fluid density
            u_inf: Free-stream speed
            d: Body diameter

        Returns:
            Dictionary with Fx, Fy, CD, CL
        """
        Fx, Fy = -np.asarray(net_penalty_force, dtype=float)
        scale = 0.5 * rho * u_inf**2 * d
        return {"Fx": float(Fx), "Fy": float(Fy), "CD": float(Fx / scale), "CL": float(Fy / scale)}

    @staticmethod
    def strouhal(
        lift: Sequence[float],
        times: Sequence[float],
        d: float,
        u_inf: float,
        discard: float = 0.5,
    ) -> Optional[float]:
        """Shedding frequency f d / u_inf from a lift-coefficient history.

        The first ``discard`` fraction of the series is dropped, and the peak of a
        Hann-windowed periodogram is refined by parabolic interpolation of the
        log power.

        Returns:
            Strouhal number, or None if the series shows no oscillation
        """
        lift = np.asarray(lift, dtype=float)
        times = np.asarray(times, dtype=float)
        if lift.shape != times.shape:
            raise ValueError(f"Lift and time series differ in length: {lift.shape} vs {times.shape}")
        start = int(np.floor(discard * len(lift)))
        signal, t = lift[start:], times[start:]
        if len(signal) < 8:
            logger.warning(f"Lift series too short for a frequency estimate ({len(signal)} samples)")
            return None
        steps = np.diff(t)
        if np.ptp(steps) > 1e-6 * steps.mean():
            raise ValueError("Lift series must be uniformly sampled")
        signal = signal - signal.mean()
        if not np.any(np.abs(signal) > 1e-12 * max(1.0, np.abs(lift).max())):
            logger.warning("No shedding detected: lift series is constant")
            return None
        n_fft = 8 * int(2 ** np.ceil(np.log2(len(signal))))
        freqs, power = periodogram(signal, fs=1.0 / steps.mean(), window="hann", nfft=n_fft)
        k = int(np.argmax(power[1:])) + 1
        if power[k] <= 0.0:
            logger.warning("No shedding detected: empty spectrum")
            return None
        frequency = freqs[k]
        if 1 <= k < len(power) - 1 and power[k - 1] > 0.0 and power[k + 1] > 0.0:
            a, b, c = np.log(power[k - 1 : k + 2])
            denominator = a - 2.0 * b + c
            if denominator != 0.0:
                frequency += 0.5 * (a - c) / denominator * (freqs[1] - freqs[0])
        duration = t[-1] - t[0]
        if frequency * duration < 5.0:
            logger.warning(f"Window covers only {frequency * duration:.1f} shedding periods")
        return float(frequency * d / u_inf)


class DiagnosticsSeries:
    """Time-stamped scalar records written as CSV (t, CL, CD, volume, ke, umax)."""

    def __init__(self):
        self._records: List[Dict[str, float]] = []

    def append(self, t: float, **values: float) -> None:
        if self._records and t < self._records[-1]["t"]:
            raise ValueError(f"Diagnostics timestamps must be monotone, got {t} after {self._records[-1]['t']}")
        unknown = set(values) - set(SERIES_COLUMNS)
        if unknown:
            raise ValueError(f"Unknown diagnostics columns: {sorted(unknown)}")
        record = {column: float("nan") for column in SERIES_COLUMNS}
        record.update({k: float(v) for k, v in values.items()})
        record["t"] = float(t)
        self._records.append(record)

    def __len__(self) -> int:
        return len(self._records)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self._records, columns=list(SERIES_COLUMNS))

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        logger.info(f"Wrote diagnostics series ({len(self)} rows) to {path}")
        return path

    def force_summary(self, discard: float = 0.5) -> Dict[str, float]:
        """Mean and half peak-to-peak amplitude of CD and CL after the transient."""
        frame = self.to_frame()
        tail = frame.iloc[int(np.floor(discard * len(frame))) :]
        summary = {}
        for column in ("CD", "CL"):
            values = tail[column].dropna()
            if values.empty:
                continue
            summary[f"{column}_mean"] = float(values.mean())
            summary[f"{column}_amplitude"] = float(0.5 * (values.max() - values.min()))
        return summary
