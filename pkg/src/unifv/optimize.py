"""Gradient-descent outer loop for the unified solver.

Each iteration solves the constraint system forward while recording the
trajectory, sweeps the adjoint backward over the frozen record, extracts the
functional gradient, and takes a fixed-length descent step on the sought
parameter field.  The stable step size is recomputed from the updated
initial data every iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .ader import StepControls, solve_backward, solve_forward, stable_dt
from .core import (CellField, Grid, MeasurementData, StationaryDataError,
                   TrajectoryStore, UnifiedModel)

ERROR_METRICS = ("max_abs_vs_reference", "free_surface_max_abs")


@dataclass(frozen=True)
class OptimConfig:
    """Descent-loop configuration."""

    lambda_ip: float
    max_iters: int
    stop_tol: float = 0.0
    error_metric: str = "max_abs_vs_reference"

    def __post_init__(self):
        if not np.isfinite(self.lambda_ip):
            raise ValueError("lambda_ip must be finite")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be non-negative")
        if self.error_metric not in ERROR_METRICS:
            raise ValueError(f"unknown error metric: {self.error_metric!r}")


@dataclass
class IterationRecord:
    k: int
    cost: float
    error: float
    estimate: np.ndarray
    dt: float


@dataclass
class OptimHistory:
    """Per-iteration history of the descent loop."""

    records: list = field(default_factory=list)
    final_field: CellField | None = None
    final_trajectory: TrajectoryStore | None = None

    def append(self, rec: IterationRecord) -> None:
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.records])

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.records])

    @property
    def final_estimate(self) -> np.ndarray:
        return self.records[-1].estimate


def evaluate_cost(trajectory: TrajectoryStore, meas: MeasurementData,
                  model: UnifiedModel) -> float:
    """Discrete tracking functional 1/2 iint (psi - psi_bar)^2 dx dt.

    Cell sums in space, trapezoid over the recorded time levels.
    """
    trajectory.validate()
    spec = model.spec
    x = trajectory.grid.centers
    dx = trajectory.grid.dx
    dts = np.asarray(trajectory.dts)
    weights = np.zeros(trajectory.n_levels)
    weights[:-1] += 0.5 * dts
    weights[1:] += 0.5 * dts
    total = 0.0
    for k in range(trajectory.n_levels):
        level = trajectory.state_at(k)
        psi = spec.measurement(level[:, :spec.m], level[:, spec.m:])
        mismatch = psi - meas(x, trajectory.times[k])
        total += weights[k] * float(np.dot(mismatch, mismatch)) * dx
    return 0.5 * total


def gradient(adjoint_at_0: CellField, trajectory: TrajectoryStore,
             model: UnifiedModel, meas: MeasurementData) -> np.ndarray:
    """Functional gradient per cell, delegated to the model.

    Default: the adjoint block paired with the sought variable at t = 0.
    Shallow water overrides this with its closed measurement-space form at
    the final forward time.
    """
    adj = adjoint_at_0.interior[:, adjoint_at_0.layout.adjoint_slice]
    g = model.descent_gradient(adj, trajectory, meas, trajectory.grid)
    g = np.asarray(g, dtype=float)
    if g.shape[0] != trajectory.grid.cells:
        raise ValueError("gradient length does not match the grid")
    return g


def update_parameters(current: np.ndarray, grad: np.ndarray, lambda_ip: float) -> np.ndarray:
    """Fixed-step descent update b - lambda_ip * grad."""
    current = np.asarray(current, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if current.shape != grad.shape:
        raise ValueError(f"shape mismatch: estimate {current.shape}, gradient {grad.shape}")
    if not np.all(np.isfinite(grad)):
        i = int(np.argmax(~np.isfinite(grad)))
        raise FloatingPointError(f"non-finite gradient component at cell {i}")
    return current - lambda_ip * grad


def error_metric(estimate, reference, metric: str = "max_abs_vs_reference") -> float:
    """Max-abs cell distance between two fields."""
    if metric not in ERROR_METRICS:
        raise ValueError(f"unknown error metric: {metric!r}")
    a = np.asarray(estimate, dtype=float)
    b = np.asarray(reference, dtype=float)
    if a.shape != b.shape:
        raise ValueError("fields must share the grid")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def measurement_error(trajectory: TrajectoryStore, meas: MeasurementData,
                      model: UnifiedModel, norm: str = "max") -> float:
    """Distance of the computed measurement field from the target at t = T."""
    final = trajectory.state_at(trajectory.n_levels - 1)
    spec = model.spec
    psi = spec.measurement(final[:, :spec.m], final[:, spec.m:])
    diff = psi - meas(trajectory.grid.centers, trajectory.times[-1])
    if norm == "max":
        return float(np.max(np.abs(diff)))
    if norm == "l2":
        return float(np.sqrt(np.sum(diff ** 2) * trajectory.grid.dx))
    raise ValueError(f"unknown norm: {norm!r}")


def run(model: UnifiedModel, meas: MeasurementData, grid: Grid, T: float,
        controls: StepControls, optim: OptimConfig, initial_guess,
        reference=None) -> OptimHistory:
    """Forward/backward/update descent loop.

    Stops after max_iters or when the relative max-norm parameter change
    falls below stop_tol.  If every wave speed of the current initial data
    vanishes, the forward horizon is covered in a single step (nothing
    propagates, only sources act) instead of failing the iteration.
    """
    estimate = np.array(initial_guess, dtype=float)
    history = OptimHistory()
    for k in range(1, optim.max_iters + 1):
        field0 = model.build_initial_field(grid, estimate)
        try:
            dt = stable_dt(field0, model, controls.c_cfl)
        except StationaryDataError:
            dt = T
        ctrl = replace(controls, eta=1, dt=dt)
        final_field, traj = solve_forward(field0, T, ctrl, model, meas)
        cost = evaluate_cost(traj, meas, model)
        adj0 = solve_backward(traj, replace(ctrl, eta=-1), model, meas)
        g = gradient(adj0, traj, model, meas)
        new_estimate = update_parameters(estimate, g, optim.lambda_ip)
        if optim.error_metric == "free_surface_max_abs":
            err = measurement_error(traj, meas, model, norm="max")
        else:
            err = (error_metric(new_estimate, reference) if reference is not None
                   else float("nan"))
        history.append(IterationRecord(k=k, cost=cost, error=err,
                                       estimate=new_estimate.copy(), dt=dt))
        history.final_field = final_field
        history.final_trajectory = traj
        rel_change = float(np.max(np.abs(new_estimate - estimate))
                           / (1e-12 + np.max(np.abs(estimate))))
        estimate = new_estimate
        if rel_change < optim.stop_tol:
            break
    return history
