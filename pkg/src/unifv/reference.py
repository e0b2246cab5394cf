"""Baseline comparison scheme: Rusanov forward, centered explicit adjoint.

The forward solver is a first-order conservative update with a centered
parameter-derivative term; the adjoint marches backward with centered
differences of the transposed lifted Jacobian, fully explicit.  The descent
loop matches the unified one so the two solvers differ only in their
discretizations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ader import _step_sizes
from .core import (Grid, MeasurementData, ModelSpec, StationaryDataError,
                   TrajectoryStore, generic_layout)
from .models import ExperimentPreset
from .optimize import (IterationRecord, OptimConfig, OptimHistory, error_metric,
                       evaluate_cost, measurement_error, update_parameters)
from .riemann import rusanov_flux


@dataclass
class RefFields:
    """State carried by the reference scheme: flow U, adjoint P, parameters b."""

    U: np.ndarray  # (N, m)
    P: np.ndarray  # (N, m+n)
    b: np.ndarray  # (N, n)


def _edge_pad(a: np.ndarray) -> np.ndarray:
    return np.concatenate([a[:1], a, a[-1:]])


def ref_stable_dt(U0: np.ndarray, b: np.ndarray, spec: ModelSpec,
                  c_cfl: float, dx: float) -> float:
    lam = np.max(np.abs(np.linalg.eigvals(spec.flux_jacobian_U(U0, b))))
    if lam == 0.0:
        raise StationaryDataError("stationary initial data: all wave speeds vanish")
    return c_cfl * dx / float(lam.real)


def ref_forward_step(U: np.ndarray, b: np.ndarray, spec: ModelSpec,
                     dt: float, dx: float) -> np.ndarray:
    """Rusanov update plus source and centered parameter-coupling term."""
    Up = _edge_pad(U)
    bp = _edge_pad(b)
    flux = rusanov_flux(spec, Up[:-1], Up[1:], bp[:-1])
    coupling = np.einsum("kij,kj->ki", spec.param_coupling(U, b), bp[2:] - bp[:-2])
    return (U - (dt / dx) * (flux[1:] - flux[:-1])
            + dt * spec.source(U, b)
            + (dt / (2.0 * dx)) * coupling)


def _lifted_jacobian(spec: ModelSpec, U: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched [[dR/dU, dR/db - Btil], [0, 0]] of shape (k, m+n, m+n)."""
    k = U.shape[0]
    mn = spec.m + spec.n
    out = np.zeros((k, mn, mn))
    out[:, :spec.m, :spec.m] = spec.flux_jacobian_U(U, b)
    out[:, :spec.m, spec.m:] = spec.flux_jacobian_b(U, b) - spec.param_coupling(U, b)
    return out


def _adjoint_source(spec: ModelSpec, U, b, P, x, t, meas: MeasurementData,
                    dx_lifted) -> np.ndarray:
    """Dual source: mismatch forcing minus linearized-source and coupling terms."""
    mismatch = meas(x, t) - spec.measurement(U, b)
    out = mismatch[:, None] * spec.measurement_gradient(U, b)
    out -= np.einsum("kij,ki->kj", spec.source_jacobian(U, b), P[:, :spec.m])
    if spec.adjoint_coupling is not None:
        out -= np.einsum("kij,kj->ki", spec.adjoint_coupling(U, b, P), dx_lifted)
    return out


def ref_backward_step(P: np.ndarray, U_next: np.ndarray, b: np.ndarray,
                      spec: ModelSpec, meas: MeasurementData, x: np.ndarray,
                      t_next: float, dt: float, dx: float) -> np.ndarray:
    """Centered explicit backward update of the full (m+n)-component adjoint."""
    Pp = _edge_pad(P)
    jr = _lifted_jacobian(spec, U_next, b)
    transport = np.einsum("kca,kc->ka", jr, Pp[2:] - Pp[:-2])
    lifted = np.concatenate([U_next, b], axis=1)
    lp = _edge_pad(lifted)
    dx_lifted = (lp[2:] - lp[:-2]) / (2.0 * dx)
    src = _adjoint_source(spec, U_next, b, P, x, t_next, meas, dx_lifted)
    return P + (dt / (2.0 * dx)) * transport - dt * src


def ref_solve_forward(U0: np.ndarray, b: np.ndarray, spec: ModelSpec, T: float,
                      dt: float, grid: Grid) -> tuple:
    """Forward march recording (U, b) at every level, final step clipped to T."""
    layout = generic_layout(spec.m, spec.n)
    store = TrajectoryStore(grid=grid, layout=layout)
    U = U0.copy()
    store.times.append(0.0)
    store.levels.append(np.concatenate([U, b], axis=1))
    sizes = _step_sizes(T, dt)
    t = 0.0
    for j, h in enumerate(sizes):
        U = ref_forward_step(U, b, spec, h, grid.dx)
        if spec.is_admissible is not None and not np.all(spec.is_admissible(U, b)):
            bad = int(np.argmax(~spec.is_admissible(U, b)))
            raise RuntimeError(f"inadmissible reference state in cell {bad}")
        t = T if j == len(sizes) - 1 else t + h
        store.dts.append(h)
        store.times.append(t)
        store.levels.append(np.concatenate([U, b], axis=1))
    return U, store


def ref_solve_backward(trajectory: TrajectoryStore, spec: ModelSpec,
                       meas: MeasurementData, grid: Grid) -> np.ndarray:
    """Backward sweep from a zero terminal adjoint; returns P at t = 0."""
    trajectory.validate()
    x = grid.centers
    P = np.zeros((grid.cells, spec.m + spec.n))
    for k in range(trajectory.n_levels - 1, 0, -1):
        level = trajectory.state_at(k)
        U = level[:, :spec.m]
        b = level[:, spec.m:]
        P = ref_backward_step(P, U, b, spec, meas, x, trajectory.times[k],
                              trajectory.dts[k - 1], grid.dx)
    return P


def ref_run(preset: ExperimentPreset, optim: OptimConfig, meas=None,
            reference=None, initial_guess=None) -> OptimHistory:
    """Descent loop driven by the reference forward/backward steps."""
    model = preset.unified_model()
    spec = model.spec
    grid = preset.grid
    if meas is None:
        meas, reference = preset.make_measurement()
    estimate = (preset.initial_guess() if initial_guess is None
                else np.array(initial_guess, dtype=float))
    history = OptimHistory()
    for k in range(1, optim.max_iters + 1):
        U0, b = model.build_reference_state(grid, estimate)
        try:
            dt = ref_stable_dt(U0, b, spec, preset.c_cfl, grid.dx)
        except StationaryDataError:
            dt = preset.t_final
        _, traj = ref_solve_forward(U0, b, spec, preset.t_final, dt, grid)
        cost = evaluate_cost(traj, meas, model)
        P0 = ref_solve_backward(traj, spec, meas, grid)
        g = np.asarray(model.descent_gradient(P0, traj, meas, grid), dtype=float)
        new_estimate = update_parameters(estimate, g, optim.lambda_ip)
        if optim.error_metric == "free_surface_max_abs":
            err = measurement_error(traj, meas, model, norm="max")
        else:
            err = (error_metric(new_estimate, reference) if reference is not None
                   else float("nan"))
        history.append(IterationRecord(k=k, cost=cost, error=err,
                                       estimate=new_estimate.copy(), dt=dt))
        history.final_trajectory = traj
        rel_change = float(np.max(np.abs(new_estimate - estimate))
                           / (1e-12 + np.max(np.abs(estimate))))
        estimate = new_estimate
        if rel_change < optim.stop_tol:
            break
    return history
