"""Incompressible Navier-Stokes time stepping with an optional immersed structure.

Each step solves the Crank-Nicolson saddle-point system

    (ρ/Δt) u^{n+1} - (μ/2) L u^{n+1} + G p^{n+1/2} = (ρ/Δt) u^n + (μ/2) L u^n - ρ A^{n+1/2} + f^{n+1/2}
    -D u^{n+1} = 0

with A^{n+1/2} = 3/2 N(u^n) - 1/2 N(u^{n-1}) and N(u) = u·∇u reconstructed
with upwinded PPM interface values.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy import fft
from scipy.sparse.linalg import LinearOperator, gmres, splu
from tqdm import tqdm

from .coupling import ImmersedStructure, InteractionState
from .elasticity import LagrangianForce
from .exceptions import CFLViolation, SolverFailure
from .fem_mesh import Configuration
from .mac_grid import CellField, MacGrid, StaggeredField

logger = logging.getLogger(__name__)

PPM_GHOSTS = 3


@dataclass(frozen=True)
class FluidParams:
    """Uniform fluid (and structure) mass density and dynamic viscosity."""

    rho: float = 1.0
    mu: float = 0.01

    def __post_init__(self):
        if not (self.rho > 0 and self.mu > 0):
            raise ValueError(f"Density and viscosity must be positive, got rho={self.rho}, mu={self.mu}")


@dataclass
class SaddleSolveReport:
    iterations: int
    residual: float
    divergence: float
    method: str


@dataclass
class TimeStepState:
    """Solution at time level n.

    ``previous_advection`` holds u^{n-1}·∇u^{n-1} for the Adams-Bashforth
    extrapolation; ``net_force`` is Σ_Q F ω_Q of the last spread force.
    """

    u: StaggeredField
    p: CellField
    t: float = 0.0
    step: int = 0
    config: Optional[Configuration] = None
    previous_advection: Optional[StaggeredField] = None
    report: Optional[SaddleSolveReport] = None
    force: Optional[LagrangianForce] = None
    net_force: Optional[np.ndarray] = None


# ----------------------------------------------------------------------
# advection
# ----------------------------------------------------------------------


def _ppm_parabolas(q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Limited left/right parabola edge values of cells 2..L-3 along axis 0 of a padded line."""
    edges = (7.0 * (q[1:-2] + q[2:-1]) - (q[:-3] + q[3:])) / 12.0
    center = q[2:-2]
    left = edges[:-1].copy()
    right = edges[1:].copy()

    d2 = q[:-2] - 2.0 * q[1:-1] + q[2:]
    dm, d0, dp = d2[:-2], d2[1:-1], d2[2:]
    same_sign = (np.sign(dm) == np.sign(d0)) & (np.sign(d0) == np.sign(dp))
    magnitudes = np.stack([np.abs(dm), np.abs(d0), np.abs(dp)])
    smooth = same_sign & (magnitudes.max(axis=0) <= 3.0 * magnitudes.min(axis=0))

    extremum = (right - center) * (center - left) <= 0.0
    flatten = extremum & ~smooth
    left = np.where(flatten, center, left)
    right = np.where(flatten, center, right)

    dq = right - left
    q6 = 6.0 * (center - 0.5 * (left + right))
    monotone = ~extremum
    overshoot_left = monotone & (dq * q6 > dq * dq)
    overshoot_right = monotone & (-dq * dq > dq * q6)
    left, right = (
        np.where(overshoot_left, 3.0 * center - 2.0 * right, left),
        np.where(overshoot_right, 3.0 * center - 2.0 * left, right),
    )
    return left, right


def _upwind_interfaces(q: np.ndarray, velocity: np.ndarray) -> np.ndarray:
    """Upwinded interface values between consecutive unpadded locations (n + 1 interfaces)."""
    left_cell, right_cell = _ppm_parabolas(q)
    from_left = right_cell[:-1]
    from_right = left_cell[1:]
    v = 0.5 * (velocity[2:-3] + velocity[3:-2])
    return np.where(v > 0.0, from_left, np.where(v < 0.0, from_right, 0.5 * (from_left + from_right)))


def advect(u: StaggeredField, grid: MacGrid) -> StaggeredField:
    """Advective derivative u·∇_h u at every face, from upwinded PPM interface values.

    Prescribed boundary faces receive zero.
    """
    grid.check(u)
    g = PPM_GHOSTS
    h = grid.h
    p1 = grid.pad_component(u.u1, 0, g + 1)
    p2 = grid.pad_component(u.u2, 1, g + 1)
    q1 = p1[1:-1, 1:-1]
    q2 = p2[1:-1, 1:-1]
    s0, s1 = q1.shape
    t0, t1 = q2.shape
    # transverse advecting velocities: four-point averages onto the other component's faces
    v2_on_1 = 0.25 * (p2[0:s0, 1 : s1 + 1] + p2[1 : s0 + 1, 1 : s1 + 1] + p2[0:s0, 2 : s1 + 2] + p2[1 : s0 + 1, 2 : s1 + 2])
    v1_on_2 = 0.25 * (p1[1 : t0 + 1, 0:t1] + p1[2 : t0 + 2, 0:t1] + p1[1 : t0 + 1, 1 : t1 + 1] + p1[2 : t0 + 2, 1 : t1 + 1])

    components = []
    for q, velocities in ((q1, (q1, v2_on_1)), (q2, (v1_on_2, q2))):
        total = np.zeros((q.shape[0] - 2 * g, q.shape[1] - 2 * g))
        for axis in (0, 1):
            line = np.moveaxis(q, axis, 0)
            vline = np.moveaxis(velocities[axis], axis, 0)
            interfaces = _upwind_interfaces(line, vline)
            derivative = np.moveaxis((interfaces[1:] - interfaces[:-1]) / h, 0, axis)
            derivative = derivative[:, g:-g] if axis == 0 else derivative[g:-g, :]
            total += velocities[axis][g:-g, g:-g] * derivative
        components.append(total)
    vector = grid.full_vector(StaggeredField(components[0], components[1]))
    vector[~grid.unknown_mask] = 0.0
    return grid.field_from_vector(vector)


# ----------------------------------------------------------------------
# saddle-point solve
# ----------------------------------------------------------------------


class SaddlePointSolver:
    """Crank-Nicolson viscous system with the incompressibility constraint.

    Doubly periodic grids are solved exactly by Fourier diagonalisation.
    Other grids use GMRES on the assembled saddle matrix, preconditioned by a
    projection method (damped-Jacobi velocity sweeps and a sparse LU pressure
    solve).
    """

    def __init__(
        self,
        grid: MacGrid,
        params: FluidParams,
        dt: float,
        tol: float = 1e-9,
        max_cycles: int = 20,
        restart: int = 50,
        sweeps: int = 3,
        damping: float = 0.8,
    ):
        if not dt > 0:
            raise ValueError(f"Time step must be positive, got dt={dt}")
        if not 0.0 < tol <= 1e-4:
            raise ValueError(f"Solver tolerance must be in (0, 1e-4], got {tol}")
        self.grid = grid
        self.params = params
        self.dt = dt
        self.tol = tol
        self.max_cycles = max_cycles
        self.restart = restart
        self.sweeps = sweeps
        self.damping = damping
        self.alpha = params.rho / dt
        self.beta = 0.5 * params.mu
        self.periodic = all(grid.spec.periodic)
        self._warned_divergence = False
        if self.periodic:
            self._build_symbols()
        else:
            self._build_system()

    def _build_symbols(self) -> None:
        h = self.grid.h
        theta1 = 2.0 * np.pi * np.fft.fftfreq(self.grid.spec.n1)[:, None]
        theta2 = 2.0 * np.pi * np.fft.fftfreq(self.grid.spec.n2)[None, :]
        self._div_symbols = ((np.exp(1j * theta1) - 1.0) / h, (np.exp(1j * theta2) - 1.0) / h)
        self._grad_symbols = ((1.0 - np.exp(-1j * theta1)) / h, (1.0 - np.exp(-1j * theta2)) / h)
        self._lambda = -(4.0 / h**2) * (np.sin(theta1 / 2.0) ** 2 + np.sin(theta2 / 2.0) ** 2)

    def _build_system(self) -> None:
        ops = self.grid.dof_operators
        n_u = ops.laplacian.shape[0]
        self._ops = ops
        self._n_u = n_u
        self._H = (self.alpha * sp.identity(n_u, format="csr") - self.beta * ops.laplacian).tocsr()
        self._H_diag = self._H.diagonal()
        self._K = sp.bmat([[self._H, ops.gradient], [-ops.divergence, None]], format="csr")
        pressure = (ops.divergence @ ops.gradient).tolil()
        if ops.pressure_nullspace:
            pressure[0, 0] -= 1.0 / self.grid.h**2
        self._pressure_lu = splu(pressure.tocsc())
        size = n_u + self.grid.n_cells
        self._preconditioner = LinearOperator((size, size), matvec=self._precondition, dtype=float)
        logger.debug(f"Assembled saddle system: {n_u} velocity and {self.grid.n_cells} pressure unknowns")

    def _precondition(self, r: np.ndarray) -> np.ndarray:
        r_u, r_p = r[: self._n_u], r[self._n_u :]
        u = np.zeros(self._n_u)
        for _ in range(self.sweeps):
            u += self.damping * (r_u - self._H @ u) / self._H_diag
        q = r_p + self._ops.divergence @ u
        phi = self._pressure_lu.solve(q)
        u = u - self._ops.gradient @ phi
        p = self.alpha * phi - self.beta * q
        return np.concatenate([u, p])

    def solve(
        self,
        rhs: StaggeredField,
        u_guess: Optional[StaggeredField] = None,
        p_guess: Optional[CellField] = None,
    ) -> Tuple[StaggeredField, CellField, SaddleSolveReport]:
        """Solve for (u^{n+1}, p^{n+1/2}) given the explicit momentum right-hand side.

        Args:
            rhs: (ρ/Δt) u^n + (μ/2) L u^n - ρ A + f on every face
            u_guess: Initial velocity guess (Krylov path)
            p_guess: Initial pressure guess (Krylov path); zero if omitted

        Returns:
            Tuple of (velocity, pressure with zero mean when it has a nullspace, report)

        Raises:
            SolverFailure: If the iteration cap is reached before the tolerance
        """
        self.grid.check(rhs)
        if self.periodic:
            u, p, report = self._solve_fourier(rhs)
        else:
            u, p, report = self._solve_krylov(rhs, u_guess, p_guess)
        self._check_divergence(u, report)
        return u, p, report

    def _solve_fourier(self, rhs: StaggeredField) -> Tuple[StaggeredField, CellField, SaddleSolveReport]:
        r1 = fft.fft2(rhs.u1)
        r2 = fft.fft2(rhs.u2)
        d1, d2 = self._div_symbols
        g1, g2 = self._grad_symbols
        lam = self._lambda
        safe = np.where(lam == 0.0, 1.0, lam)
        p_hat = np.where(lam == 0.0, 0.0, (d1 * r1 + d2 * r2) / safe)
        alpha = self.alpha - self.beta * lam
        u = StaggeredField(
            np.real(fft.ifft2((r1 - g1 * p_hat) / alpha)), np.real(fft.ifft2((r2 - g2 * p_hat) / alpha))
        )
        p = CellField(np.real(fft.ifft2(p_hat)))
        residual = self._momentum_residual(u, p, rhs)
        return u, p, SaddleSolveReport(iterations=1, residual=residual, divergence=0.0, method="fourier")

    def _momentum_residual(self, u: StaggeredField, p: CellField, rhs: StaggeredField) -> float:
        lhs = self.alpha * u - self.beta * self.grid.laplacian(u) + self.grid.gradient(p)
        r = self.grid.full_vector(lhs - rhs)[self.grid.unknown_mask]
        norm = np.linalg.norm(self.grid.full_vector(rhs)[self.grid.unknown_mask])
        return float(np.linalg.norm(r) / norm) if norm > 0 else float(np.linalg.norm(r))

    def _solve_krylov(
        self, rhs: StaggeredField, u_guess: Optional[StaggeredField], p_guess: Optional[CellField]
    ) -> Tuple[StaggeredField, CellField, SaddleSolveReport]:
        ops = self._ops
        b = np.concatenate([self.grid.to_dofs(rhs) + self.beta * ops.laplacian_bc, ops.divergence_bc])
        b_norm = np.linalg.norm(b)
        u0 = self.grid.to_dofs(u_guess) if u_guess is not None else np.zeros(self._n_u)
        p0 = p_guess.values.ravel() if p_guess is not None else np.zeros(self.grid.n_cells)
        x = np.concatenate([u0, p0])
        iterations = 0
        residual = np.inf

        def count(_):
            nonlocal iterations
            iterations += 1

        if b_norm == 0.0:
            x = np.zeros_like(x)
            residual = 0.0
        else:
            for _ in range(4):
                x, info = gmres(
                    self._K,
                    b,
                    x0=x,
                    rtol=self.tol,
                    atol=0.0,
                    restart=self.restart,
                    maxiter=self.max_cycles,
                    M=self._preconditioner,
                    callback=count,
                    callback_type="pr_norm",
                )
                residual = float(np.linalg.norm(b - self._K @ x) / b_norm)
                if residual <= self.tol or info > 0:
                    break
        u = self.grid.from_dofs(x[: self._n_u])
        p = CellField(x[self._n_u :].reshape(self.grid.spec.cells).copy())
        if ops.pressure_nullspace:
            p = CellField(p.values - p.values.mean())
        report = SaddleSolveReport(iterations=iterations, residual=residual, divergence=0.0, method="gmres")
        if residual > self.tol:
            raise SolverFailure(
                f"Saddle solve did not converge: relative residual {residual:.3e} after {iterations} iterations",
                report,
            )
        logger.debug(f"Saddle solve converged in {iterations} iterations (residual {residual:.2e})")
        return u, p, report

    def _check_divergence(self, u: StaggeredField, report: SaddleSolveReport) -> None:
        divergence = float(np.max(np.abs(self.grid.divergence(u).values)))
        report.divergence = divergence
        bound = 10.0 * self.tol * max(u.max_abs(), 1.0) / self.grid.h
        if divergence > bound:
            level = logging.DEBUG if self._warned_divergence else logging.WARNING
            logger.log(level, f"Discrete divergence {divergence:.3e} exceeds {bound:.3e} after saddle solve")
            self._warned_divergence = True


# ----------------------------------------------------------------------
# time integration
# ----------------------------------------------------------------------


class FluidStructureIntegrator:
    """Advance fluid (and an optional immersed structure) by fixed time steps.

    The first step uses a two-stage predictor-corrector; later steps use
    Adams-Bashforth advection with a midpoint structure update.
    """

    def __init__(
        self,
        grid: MacGrid,
        params: FluidParams,
        dt: float,
        structure: Optional[ImmersedStructure] = None,
        body_force: Optional[StaggeredField] = None,
        tol: float = 1e-9,
        cfl_max: float = 0.5,
    ):
        self.grid = grid
        self.params = params
        self.dt = dt
        self.structure = structure
        self.body_force = body_force if body_force is not None else StaggeredField.zeros(grid.spec)
        grid.check(self.body_force)
        self.cfl_max = cfl_max
        self.solver = SaddlePointSolver(grid, params, dt, tol)

    def initial_state(self, u0: Optional[StaggeredField] = None) -> TimeStepState:
        u = self.grid.apply_boundary_values(u0 if u0 is not None else StaggeredField.zeros(self.grid.spec))
        config = self.structure.config.copy() if self.structure is not None else None
        return TimeStepState(u=u, p=CellField.zeros(self.grid.spec), config=config)

    def check_cfl(self, u: StaggeredField) -> float:
        """Return the CFL number max|u| Δt / h.

        Raises:
            CFLViolation: If it exceeds ``cfl_max``
        """
        cfl = u.max_abs() * self.dt / self.grid.h
        if not np.isfinite(cfl) or cfl > self.cfl_max:
            raise CFLViolation(f"CFL number {cfl:.3f} exceeds limit {self.cfl_max} (dt={self.dt}, h={self.grid.h})")
        if cfl > 0.8 * self.cfl_max:
            logger.warning(f"CFL number {cfl:.3f} is close to the limit {self.cfl_max}")
        return cfl

    def momentum_rhs(self, u: StaggeredField, advection: StaggeredField, force: StaggeredField) -> StaggeredField:
        rho = self.params.rho
        return (
            self.solver.alpha * u
            + self.solver.beta * self.grid.laplacian(u)
            - rho * advection
            + force
            + self.body_force
        )

    def _spread(self, interaction: InteractionState, chi: np.ndarray, velocity: np.ndarray):
        force = self.structure.force(chi, velocity)
        if not force.is_finite():
            raise SolverFailure("Lagrangian force is not finite")
        return interaction.spread(force), force, interaction.net_force(force)

    def initial_step(self, state: TimeStepState) -> TimeStepState:
        """Predictor-corrector first step from time level 0."""
        if state.step != 0:
            raise ValueError(f"Initial step needs step index 0, got {state.step}")
        self.check_cfl(state.u)
        dt = self.dt
        advection_n = advect(state.u, self.grid)
        zero_p = CellField.zeros(self.grid.spec)
        f = StaggeredField.zeros(self.grid.spec)
        if self.structure is not None:
            chi = state.config.chi
            at_n = self.structure.at(chi)
            U_n = at_n.restrict(state.u)
            f, _, _ = self._spread(at_n, chi, U_n)
        u_tilde, _, _ = self.solver.solve(self.momentum_rhs(state.u, advection_n, f), state.u, zero_p)

        force = net_force = None
        if self.structure is not None:
            chi_tilde = chi + dt * at_n.restrict(0.5 * (u_tilde + state.u))
            chi_half = 0.5 * (chi_tilde + chi)
            at_half = self.structure.at(chi_half)
            f, force, net_force = self._spread(at_half, chi_half, U_n)
        advection_half = advect(0.5 * (u_tilde + state.u), self.grid)
        u_new, p_new, report = self.solver.solve(self.momentum_rhs(state.u, advection_half, f), u_tilde, zero_p)
        config = None
        if self.structure is not None:
            U_half = at_half.restrict(0.5 * (u_new + state.u))
            config = Configuration(chi + dt * U_half, U_half)
        return self._finish(state, u_new, p_new, config, advection_n, report, force, net_force)

    def step(self, state: TimeStepState) -> TimeStepState:
        """Advance one step; delegates to :meth:`initial_step` at step index 0."""
        if state.step == 0:
            return self.initial_step(state)
        self.check_cfl(state.u)
        dt = self.dt
        advection_n = advect(state.u, self.grid)
        previous = state.previous_advection if state.previous_advection is not None else advection_n
        advection = 1.5 * advection_n - 0.5 * previous
        f = StaggeredField.zeros(self.grid.spec)
        force = net_force = None
        if self.structure is not None:
            chi = state.config.chi
            U_n = self.structure.at(chi).restrict(state.u)
            chi_half = chi + 0.5 * dt * U_n
            at_half = self.structure.at(chi_half)
            f, force, net_force = self._spread(at_half, chi_half, U_n)
        u_new, p_new, report = self.solver.solve(self.momentum_rhs(state.u, advection, f), state.u, state.p)
        config = None
        if self.structure is not None:
            U_half = at_half.restrict(0.5 * (u_new + state.u))
            config = Configuration(chi + dt * U_half, U_half)
        return self._finish(state, u_new, p_new, config, advection_n, report, force, net_force)

    def _finish(self, state, u, p, config, advection_n, report, force, net_force) -> TimeStepState:
        if not u.is_finite() or (config is not None and not config.is_finite()):
            raise SolverFailure(f"Non-finite solution at step {state.step + 1}", report)
        logger.debug(
            f"Step {state.step + 1}: t={state.t + self.dt:.6g}, max|u|={u.max_abs():.4g}, "
            f"residual={report.residual:.2e}"
        )
        return TimeStepState(
            u=u,
            p=p,
            t=state.t + self.dt,
            step=state.step + 1,
            config=config,
            previous_advection=advection_n,
            report=report,
            force=force,
            net_force=net_force,
        )

    def n_steps(self, t_end: float, t_start: float = 0.0) -> int:
        return max(0, int(np.ceil((t_end - t_start) / self.dt - 1e-9)))

    def advance(
        self,
        state: TimeStepState,
        t_end: float,
        callback: Optional[Callable[[TimeStepState], None]] = None,
        show_progress: bool = False,
    ) -> TimeStepState:
        """Step until ``t_end``, calling ``callback`` after every step."""
        steps = self.n_steps(t_end, state.t)
        for _ in tqdm(range(steps), desc="Time steps", disable=not show_progress):
            state = self.step(state)
            if callback is not None:
                callback(state)
        return state


def solve_saddle(
    u_n: StaggeredField,
    grid: MacGrid,
    params: FluidParams,
    dt: float,
    advection: Optional[StaggeredField] = None,
    force: Optional[StaggeredField] = None,
    p_guess: Optional[CellField] = None,
    tol: float = 1e-9,
) -> Tuple[StaggeredField, CellField, SaddleSolveReport]:
    """One Crank-Nicolson saddle solve from u^n with given advection and forcing."""
    integrator = FluidStructureIntegrator(grid, params, dt, tol=tol)
    zero = StaggeredField.zeros(grid.spec)
    rhs = integrator.momentum_rhs(
        grid.apply_boundary_values(u_n),
        advection if advection is not None else zero,
        force if force is not None else zero,
    )
    return integrator.solver.solve(rhs, u_n, p_guess)
