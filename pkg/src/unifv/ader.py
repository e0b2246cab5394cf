"""One-step second-order path-conservative finite-volume scheme.

Per step: minmod reconstruction, a local space-time Taylor predictor whose
time derivative is replaced through the governing equation, Osher-type
interface fluxes plus path-integrated jump terms, and midpoint-in-time,
Gauss-in-space volume quadrature.  The direction flag eta selects forward
(+1) or backward (-1) evolution; the backward sweep freezes the recorded
(state, params) block and advances only the adjoint block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (CellField, MeasurementData, StationaryDataError,
                   TrajectoryMismatchError, TrajectoryStore, UnifiedModel,
                   _fill_ghosts)
from .riemann import GAUSS3, dot_flux, jump_term


@dataclass(frozen=True)
class StepControls:
    """Time-step configuration: CFL number, direction flag, step size."""

    c_cfl: float = 0.1
    eta: int = 1
    dt: float | None = None

    def __post_init__(self):
        if not 0.0 < self.c_cfl <= 1.0:
            raise ValueError("c_cfl must lie in (0, 1]")
        if self.eta not in (1, -1):
            raise ValueError("eta must be +1 or -1")
        if self.dt is not None and not self.dt > 0.0:
            raise ValueError("dt must be positive")


def minmod_slope(q_minus, q_center, q_plus):
    """Componentwise minmod of the one-sided differences.

    Zero at extrema (non-positive product), otherwise the smaller-magnitude
    difference.
    """
    a = np.asarray(q_center, dtype=float) - np.asarray(q_minus, dtype=float)
    b = np.asarray(q_plus, dtype=float) - np.asarray(q_center, dtype=float)
    return np.where(a * b <= 0.0, 0.0, np.where(np.abs(a) <= np.abs(b), a, b))


def _predict(values, slopes, xi: float, tau: float, dx: float, model: UnifiedModel):
    """Space-time predictor value at local coordinates (xi, tau).

    Linear reconstruction P(xi) = Q + (xi - 1/2) Delta, evolved by the
    truncated Taylor step  P - tau * (A(P) Delta) / dx  with A the full
    quasilinear matrix.  Backward sweeps pass negative tau: the expansion is
    in physical time.
    """
    p = values + (xi - 0.5) * slopes
    if tau == 0.0:
        return p
    return p - (tau / dx) * model.quasilinear_mul(p, slopes)


@dataclass
class Predictor:
    """Per-cell space-time polynomial used by the one-step update."""

    values: np.ndarray
    slope: np.ndarray
    dx: float
    dt: float
    model: UnifiedModel

    def value(self, xi: float, tau: float) -> np.ndarray:
        return _predict(self.values[None, :], self.slope[None, :], xi, tau,
                        self.dx, self.model)[0]


def build_predictor(i: int, field: CellField, model: UnifiedModel, dt: float) -> Predictor:
    """Predictor of interior cell i; neighbors must be ghost-filled."""
    c = field.grid.ghost_layers + i
    slope = minmod_slope(field.data[c - 1], field.data[c], field.data[c + 1])
    return Predictor(values=field.data[c].copy(), slope=slope,
                     dx=field.grid.dx, dt=dt, model=model)


def interface_states(left: Predictor, right: Predictor, tau: float):
    """Traces at a shared interface: left cell at xi=1, right cell at xi=0."""
    if left.dt != right.dt:
        raise ValueError("predictors must share the step size")
    return left.value(1.0, tau), right.value(0.0, tau)


def stable_dt(field: CellField, model: UnifiedModel, c_cfl: float) -> float:
    """CFL step from the largest wave speed of the given (initial) field.

    Must be recomputed whenever the sought parameters change between outer
    iterations.
    """
    lam = float(np.max(model.max_abs_eigenvalue(field.interior)))
    if lam == 0.0:
        raise StationaryDataError("stationary initial data: all wave speeds vanish")
    return c_cfl * field.grid.dx / lam


def step(field: CellField, controls: StepControls, model: UnifiedModel,
         meas: MeasurementData, components: slice | None = None) -> CellField:
    """Advance one step of size controls.dt in direction controls.eta.

    ``components`` restricts which columns of the unified vector are
    written; the backward sweep passes the adjoint block and leaves the
    frozen (state, params) block untouched.
    """
    if controls.dt is None:
        raise ValueError("step requires an explicit dt")
    dt = controls.dt
    eta = controls.eta
    grid = field.grid
    g = grid.ghost_layers
    dx = grid.dx
    data = field.data.copy()
    _fill_ghosts(data, g)

    slopes = np.zeros_like(data)
    slopes[1:-1] = minmod_slope(data[:-2], data[1:-1], data[2:])

    # Midpoint of the step in physical time, relative to the anchor level.
    tau = eta * 0.5 * dt
    t_mid = field.time + tau

    trace_r = _predict(data, slopes, 1.0, tau, dx, model)  # right trace of each cell
    trace_l = _predict(data, slopes, 0.0, tau, dx, model)  # left trace of each cell

    # Interface i sits between cells i and i+1.
    ql = trace_r[:-1]
    qr = trace_l[1:]
    fhat = dot_flux(model, ql, qr, eta)
    djump = jump_term(model, ql, qr, eta)

    # Volume contributions at the time midpoint, 3-point Gauss in space.
    xg = grid.all_centers()
    vol = np.zeros_like(data)
    src = np.zeros_like(data)
    for s, w in zip(GAUSS3.nodes, GAUSS3.weights):
        qv = _predict(data, slopes, s, tau, dx, model)
        vol += w * model.b_mul(qv, slopes)
        src += w * model.source(qv, xg + (s - 0.5) * dx, t_mid, meas)

    interior = grid.interior
    i0, i1 = interior.start, interior.stop
    update = (-eta * (dt / dx) * (fhat[i0:i1] - fhat[i0 - 1:i1 - 1]
                                  + djump[i0:i1] + djump[i0 - 1:i1 - 1]
                                  + vol[i0:i1])
              + eta * dt * src[i0:i1])

    new = data
    if components is None:
        new[interior] += update
    else:
        new[interior, components] += update[:, components]

    out = CellField(grid, field.layout, new, time=field.time + eta * dt)
    model.check_admissible(out.interior, out.time)
    return out


def _step_sizes(T: float, dt: float) -> list:
    """Uniform steps of size dt with the last one clipped to land on T."""
    n = max(1, math.ceil(T / dt - 1e-9))
    sizes = [dt] * (n - 1)
    sizes.append(T - dt * (n - 1))
    return sizes


def solve_forward(initial: CellField, T: float, controls: StepControls,
                  model: UnifiedModel, meas: MeasurementData):
    """March the full unified vector from t=0 to t=T, recording every level."""
    if not T > 0.0:
        raise ValueError("final time must be positive")
    if controls.dt is None:
        raise ValueError("solve_forward requires controls.dt")
    ctrl = replace(controls, eta=1)
    fld = CellField(initial.grid, initial.layout, initial.data.copy(), time=0.0)
    _fill_ghosts(fld.data, fld.grid.ghost_layers)
    store = TrajectoryStore(grid=fld.grid, layout=fld.layout)
    store.record(fld)
    sizes = _step_sizes(T, ctrl.dt)
    t = 0.0
    for j, h in enumerate(sizes):
        fld = step(fld, replace(ctrl, dt=h), model, meas)
        t = T if j == len(sizes) - 1 else t + h
        fld.time = t
        store.dts.append(h)
        store.record(fld)
    return fld, store


def solve_backward(trajectory: TrajectoryStore, controls: StepControls,
                   model: UnifiedModel, meas: MeasurementData,
                   level_hook=None) -> CellField:
    """Backward adjoint sweep over a recorded forward trajectory.

    Starts from a zero adjoint at the final level and reuses the recorded
    step sizes in reverse.  At every level the (state, params) block is
    loaded verbatim from the record; only the adjoint block evolves.
    Returns the field at t = 0, whose adjoint block is the gradient source.
    """
    trajectory.validate()
    grid = trajectory.grid
    layout = trajectory.layout
    ctrl = replace(controls, eta=-1)
    fwd = layout.forward_slice

    fld = CellField.zeros(grid, layout, time=trajectory.times[-1])
    fld.data[grid.interior, fwd] = trajectory.state_at(trajectory.n_levels - 1)
    _fill_ghosts(fld.data, grid.ghost_layers)

    for k in range(trajectory.n_levels - 1, 0, -1):
        if level_hook is not None:
            level_hook(k, fld)
        if not np.array_equal(fld.interior[:, fwd], trajectory.state_at(k)):
            raise TrajectoryMismatchError(f"frozen state diverged from record at level {k}")
        fld = step(fld, replace(ctrl, dt=trajectory.dts[k - 1]), model, meas,
                   components=layout.adjoint_slice)
        fld.data[grid.interior, fwd] = trajectory.state_at(k - 1)
        fld.time = trajectory.times[k - 1]
        _fill_ghosts(fld.data, grid.ghost_layers)
    if level_hook is not None:
        level_hook(0, fld)
    return fld
