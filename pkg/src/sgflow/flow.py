"""Descent driver: damped gradient flow with accept/reject adaptation.

Each step is a forward-Euler move u -> u - delta with time step 1, where
delta is the requested descent direction at the current damping lam.
Acceptance is by sign of the energy decrease (an optional
predicted-vs-actual ratio test is available); accepted steps grow lam
toward the full Sobolev-gradient step, rejected steps shrink it toward
short, safe Gauss-Newton-direction moves. Because lam scales the step
(see `directions`), this is the usual trust-region bookkeeping expressed
in reciprocal-damping form.

For direction kinds without intrinsic damping (euclidean, sobolev,
gauss_newton) the trial step is u - min(1, lam) * delta, so lam acts as
a plain step-size cap under the same accept/reject rule.

A gradient-inequality monitor fits log ||grad E||_u against log E over a
trailing window of accepted iterates. It is observational only: the fit
is recorded on the trace and never terminates the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .directions import (
    DAMPED_KINDS,
    DirectionRequest,
    DirectionSolver,
    canonical_kind,
)
from .errors import (
    DivergedStateError,
    ParameterError,
    SolverError,
    StagnationError,
)
from .grid import Grid2D
from .residuals import Assembler, ResidualSystem

TERMINATION_REASONS = (
    "gradient_tolerance",
    "energy_stall",
    "max_iterations",
    "stagnation",
)


@dataclass
class FlowConfig:
    """Knobs of the descent driver.

    lambda_increase (> 1) is applied to lam on accepted steps,
    lambda_decrease (in (0, 1)) on rejected ones; lam always stays in
    [lambda_floor, lambda_ceiling]. grad_tol is relative to the metric
    gradient norm at the first iterate.
    """

    direction: str = "lm_primal"
    lambda0: float = 1.0
    lambda_increase: float = 2.0
    lambda_decrease: float = 0.5
    lambda_floor: float = 1e-10
    # the damped step contracts every mode of a quadratic energy exactly
    # when lam < 2 (mode factor 1 - lam*n/(lam+n) stays in (-1, 1) for
    # all curvatures n > 0), so by default lam never escalates past that
    lambda_ceiling: float = 2.0
    max_iterations: int = 1000
    grad_tol: float = 1e-8
    energy_stall_tol: float = 1e-10
    monitor_window: int = 25
    cg_tol: float = 1e-10
    cg_max_iter: int | None = None
    gn_regularization: float = 0.0
    ratio_test: bool = False
    ratio_accept_min: float = 1e-4
    monitor_offset: float = 0.0

    def __post_init__(self):
        self.direction = canonical_kind(self.direction)
        if not (0.0 < self.lambda_decrease < 1.0 < self.lambda_increase):
            raise ParameterError(
                "need 0 < lambda_decrease < 1 < lambda_increase "
                f"(got {self.lambda_decrease}, {self.lambda_increase})"
            )
        if self.lambda_floor <= 0 or self.lambda_ceiling <= self.lambda_floor:
            raise ParameterError("need 0 < lambda_floor < lambda_ceiling")
        if not (self.lambda_floor <= self.lambda0 <= self.lambda_ceiling):
            raise ParameterError("lambda0 must lie in [lambda_floor, lambda_ceiling]")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")
        if self.monitor_window < 2:
            raise ParameterError("monitor_window must be >= 2")

    def request(self, lam: float) -> DirectionRequest:
        return DirectionRequest(
            kind=self.direction,
            lam=lam if self.direction in DAMPED_KINDS else None,
            cg_tol=self.cg_tol,
            cg_max_iter=self.cg_max_iter,
            lambda_floor=self.lambda_floor,
            regularization=self.gn_regularization,
        )


@dataclass
class StepRecord:
    iteration: int
    energy: float
    grad_norm: float
    metric_norm: float
    lam: float
    accepted: bool
    cg_iterations: int
    trial_energy: float


@dataclass
class FlowState:
    """Current iterate plus cached assembly and damping."""

    u: np.ndarray
    lam: float
    solver: DirectionSolver
    iteration: int = 0

    @property
    def energy(self) -> float:
        return self.solver.energy


@dataclass
class LojasiewiczEstimate:
    """Power-law fit ||grad E|| ~ m * E^theta over a trace window."""

    theta: float
    m: float
    valid: bool
    n_points: int


@dataclass
class FlowTrace:
    records: list[StepRecord]
    final_u: np.ndarray
    termination: str
    initial_energy: float
    lojasiewicz: LojasiewiczEstimate | None = None

    @property
    def final_energy(self) -> float:
        for rec in reversed(self.records):
            if rec.accepted:
                return rec.trial_energy
        return self.initial_energy

    @property
    def n_accepted(self) -> int:
        return sum(1 for r in self.records if r.accepted)

    def accepted_records(self) -> list[StepRecord]:
        return [r for r in self.records if r.accepted]

    def accepted_energies(self) -> np.ndarray:
        """Energies of the accepted iterate sequence, initial state first."""
        return np.array(
            [self.initial_energy] + [r.trial_energy for r in self.records if r.accepted]
        )

    def check_monotone(self):
        """Raise if any accepted step failed to strictly decrease the energy."""
        e = self.accepted_energies()
        if np.any(np.diff(e) >= 0):
            raise RuntimeError("trace violates monotone energy decrease")


def init_flow_state(
    system: ResidualSystem, grid: Grid2D, u0: np.ndarray, config: FlowConfig
) -> FlowState:
    asm = Assembler(system, grid)
    u0 = np.asarray(u0, dtype=np.float64).copy()
    state = FlowState(u0, config.lambda0, DirectionSolver(asm, u0))
    if not math.isfinite(state.energy):
        raise DivergedStateError(-1, "initial state has non-finite energy")
    return state


def step(
    system: ResidualSystem, grid: Grid2D, state: FlowState, config: FlowConfig
) -> tuple[FlowState, StepRecord]:
    """One accept/reject move of the flow.

    Raises StagnationError when a step is rejected while lam already
    sits at the floor; a non-finite trial energy is an ordinary reject.
    """
    solver = state.solver
    energy = solver.energy
    grad_norm = float(np.linalg.norm(solver.gradient))
    lam = state.lam
    it = state.iteration + 1

    cg_iters = 0
    trial_energy = math.nan
    metric_norm = math.nan
    accepted = False
    trial_u = None
    pred = None

    try:
        result = solver.compute(config.request(lam), strict=False)
    except SolverError as exc:
        if exc.report is not None:
            cg_iters = exc.report.iterations
        result = None

    if result is not None:
        if result.report is not None:
            cg_iters = result.report.iterations + result.report.inner_iterations
        metric_norm = math.sqrt(max(result.metric_norm_sq, 0.0))
        scale = 1.0 if config.direction in DAMPED_KINDS else min(1.0, lam)
        trial_u = state.u - scale * result.direction
        try:
            trial_energy = solver.assembler.energy(trial_u)
        except DivergedStateError:
            trial_energy = math.inf
        if math.isfinite(trial_energy) and trial_energy < energy:
            accepted = True
            if config.ratio_test:
                pred = _predicted_reduction(solver, result.direction, scale)
                if pred > 0:
                    accepted = (energy - trial_energy) / pred >= config.ratio_accept_min

    if accepted:
        new_lam = min(lam * config.lambda_increase, config.lambda_ceiling)
        new_state = FlowState(
            trial_u, new_lam, DirectionSolver(solver.assembler, trial_u), it
        )
    else:
        if lam <= config.lambda_floor * (1.0 + 1e-12):
            raise StagnationError(
                f"step rejected with damping already at the floor "
                f"({config.lambda_floor:g}) at iteration {it}"
            )
        new_lam = max(lam * config.lambda_decrease, config.lambda_floor)
        new_state = FlowState(state.u, new_lam, solver, it)

    record = StepRecord(
        iteration=it,
        energy=energy,
        grad_norm=grad_norm,
        metric_norm=metric_norm,
        lam=lam,
        accepted=accepted,
        cg_iterations=cg_iters,
        trial_energy=trial_energy,
    )
    return new_state, record


def _predicted_reduction(solver: DirectionSolver, delta: np.ndarray, scale: float):
    """Gauss-Newton model decrease g^T d - 1/2 d^T N d for d = scale*delta."""
    d = scale * delta
    jd = solver.assembly.jacobian.matvec(d)
    quad = float(np.einsum("i,i,i->", solver.assembly.weights, jd, jd))
    lin = float(np.einsum("i,i->", solver.gradient, d))
    return lin - 0.5 * quad


def run_flow(
    system: ResidualSystem, grid: Grid2D, u0: np.ndarray, config: FlowConfig
) -> FlowTrace:
    """Iterate `step` until a declared termination.

    Terminates on: metric gradient norm below grad_tol relative to its
    initial value; relative energy decrease over the monitor window below
    energy_stall_tol; max_iterations; or stagnation (rejects at the
    damping floor). The trace records every step and the final
    gradient-inequality fit.
    """
    state = init_flow_state(system, grid, u0, config)
    initial_energy = state.energy
    records: list[StepRecord] = []
    accepted_energies = [initial_energy]
    grad_ref = None
    termination = "max_iterations"

    for _ in range(config.max_iterations):
        try:
            state, rec = step(system, grid, state, config)
        except StagnationError:
            termination = "stagnation"
            break
        records.append(rec)
        if rec.accepted:
            accepted_energies.append(rec.trial_energy)
        if grad_ref is None and math.isfinite(rec.metric_norm):
            grad_ref = rec.metric_norm
        if (
            grad_ref is not None
            and math.isfinite(rec.metric_norm)
            and rec.metric_norm <= config.grad_tol * grad_ref
        ):
            termination = "gradient_tolerance"
            break
        w = config.monitor_window
        if len(accepted_energies) > w:
            drop = accepted_energies[-w - 1] - accepted_energies[-1]
            floor = max(abs(accepted_energies[-1]), 1e-300)
            if drop <= config.energy_stall_tol * floor:
                termination = "energy_stall"
                break

    trace = FlowTrace(records, state.u, termination, initial_energy)
    trace.check_monotone()
    acc = [
        r
        for r in trace.accepted_records()
        if r.trial_energy - config.monitor_offset > 1e-14
    ][-config.monitor_window :]
    trace.lojasiewicz = lojasiewicz_monitor(
        [r.trial_energy for r in acc],
        [r.metric_norm for r in acc],
        offset=config.monitor_offset,
    )
    return trace


def lojasiewicz_monitor(
    energies, grad_norms, offset: float = 0.0, window: int | None = None
) -> LojasiewiczEstimate:
    """Fit log ||grad E|| = log m + theta * log(E - offset) over a window.

    Returns an invalid estimate (never raises) when fewer than 5 usable
    points remain, when energies sit at or below the floor 1e-14, or
    when all points coincide.
    """
    e = np.asarray(energies, dtype=np.float64) - offset
    g = np.asarray(grad_norms, dtype=np.float64)
    if window is not None:
        e, g = e[-window:], g[-window:]
    mask = np.isfinite(e) & np.isfinite(g) & (e > 1e-14) & (g > 0.0)
    e, g = e[mask], g[mask]
    n = int(e.shape[0])
    if n < 5:
        return LojasiewiczEstimate(math.nan, math.nan, False, n)
    le, lg = np.log(e), np.log(g)
    if float(np.ptp(le)) < 1e-13:
        return LojasiewiczEstimate(math.nan, math.nan, False, n)
    theta, log_m = np.polyfit(le, lg, 1)
    if not math.isfinite(theta):
        return LojasiewiczEstimate(math.nan, math.nan, False, n)
    # an extreme intercept (flat energies with a steep fitted slope)
    # overflows exp; report the overflowed scale rather than failing
    m = math.exp(log_m) if log_m < 700.0 else math.inf
    return LojasiewiczEstimate(float(theta), m, True, n)
