"""Concrete models: Burgers and nonlinear shallow water with lifted bottom.

Burgers recovers an initial condition from space-time velocity measurements;
shallow water recovers the bottom profile b(x) from free-surface
measurements zeta_bar(x, t).  Both supply closed-form unified systems plus
the constraint-level descriptors used by the reference scheme, and target
generators for the three built-in experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ader import StepControls, solve_forward, stable_dt
from .core import (AdmissibilityError, CellField, Grid, MeasurementData, ModelSpec,
                   UnifiedLayout, UnifiedModel, zero_measurement)

H_FLOOR = 1e-10  # water columns at or below this depth abort the step


# ---------------------------------------------------------------------------
# Burgers
# ---------------------------------------------------------------------------

def burgers_spec() -> ModelSpec:
    """Inviscid Burgers flow: dq/dt + d(q^2/2)/dx = 0, measurement psi = q."""
    def flux(U, b):
        return 0.5 * U ** 2

    def source(U, b):
        return np.zeros_like(U)

    def param_coupling(U, b):
        return np.zeros((U.shape[0], 1, 0))

    def flux_jacobian_U(U, b):
        return U[:, :, None].copy()

    def flux_jacobian_b(U, b):
        return np.zeros((U.shape[0], 1, 0))

    def source_jacobian(U, b):
        return np.zeros((U.shape[0], 1, 1))

    def measurement(U, b):
        return U[:, 0]

    def measurement_gradient(U, b):
        return np.ones((U.shape[0], 1))

    return ModelSpec(m=1, n=0, flux=flux, source=source, param_coupling=param_coupling,
                     flux_jacobian_U=flux_jacobian_U, flux_jacobian_b=flux_jacobian_b,
                     source_jacobian=source_jacobian, measurement=measurement,
                     measurement_gradient=measurement_gradient)


class BurgersUnified(UnifiedModel):
    """Unified Burgers system on Q = [q, p].

    F = [q^2/2, 0], B = [[0, 0], [0, q]], S = [0, q_bar - q].  The full
    quasilinear matrix has the double eigenvalue q; the flux Jacobian alone
    carries q and 0, so the dual transport is handled entirely by the
    non-conservative terms.
    """

    layout = UnifiedLayout(m=1, n=0, adjoint=1)

    def __init__(self):
        self.spec = burgers_spec()

    def flux(self, Q):
        out = np.zeros_like(Q)
        out[:, 0] = 0.5 * Q[:, 0] ** 2
        return out

    def flux_jac_mul(self, Q, V):
        out = np.zeros_like(V)
        out[:, 0] = Q[:, 0] * V[:, 0]
        return out

    def abs_flux_jac_mul(self, Q, V):
        # Dissipation from the complete system matrix diag(q, q): both the
        # flow and its dual are upwinded at speed q.
        return np.abs(Q[:, :1]) * V

    def b_mul(self, Q, V):
        out = np.zeros_like(V)
        out[:, 1] = Q[:, 0] * V[:, 1]
        return out

    def source(self, Q, x, t, meas):
        out = np.zeros_like(Q)
        out[:, 1] = meas(x, t) - Q[:, 0]
        return out

    def max_abs_eigenvalue(self, Q):
        return np.abs(Q[:, 0])

    def build_initial_field(self, grid, estimate):
        fld = CellField.zeros(grid, self.layout)
        fld.data[grid.interior, 0] = np.asarray(estimate, dtype=float)
        return fld

    def build_reference_state(self, grid, estimate):
        u0 = np.asarray(estimate, dtype=float).reshape(grid.cells, 1)
        return u0.copy(), np.zeros((grid.cells, 0))


# ---------------------------------------------------------------------------
# Shallow water with lifted bottom
# ---------------------------------------------------------------------------

def shallow_water_spec(eps: float) -> ModelSpec:
    """Nondimensional Saint-Venant flow over a bottom b(x).

    State (h, q), flux [eps q, eps q^2/h + h^2/(2 eps)], momentum source
    -h db/dx expressed through the coupling matrix.  Total depth relates to
    the free surface by h = 1 + eps (zeta - b); the measurement is zeta.
    """
    def flux(U, b):
        h, q = U[:, 0], U[:, 1]
        out = np.empty_like(U)
        out[:, 0] = eps * q
        out[:, 1] = eps * q ** 2 / h + 0.5 * h ** 2 / eps
        return out

    def source(U, b):
        return np.zeros_like(U)

    def param_coupling(U, b):
        out = np.zeros((U.shape[0], 2, 1))
        out[:, 1, 0] = -U[:, 0]
        return out

    def flux_jacobian_U(U, b):
        h, q = U[:, 0], U[:, 1]
        out = np.zeros((U.shape[0], 2, 2))
        out[:, 0, 1] = eps
        out[:, 1, 0] = h / eps - eps * q ** 2 / h ** 2
        out[:, 1, 1] = 2.0 * eps * q / h
        return out

    def flux_jacobian_b(U, b):
        return np.zeros((U.shape[0], 2, 1))

    def source_jacobian(U, b):
        return np.zeros((U.shape[0], 2, 3))

    def measurement(U, b):
        return (U[:, 0] - 1.0) / eps + b[:, 0]

    def measurement_gradient(U, b):
        out = np.zeros((U.shape[0], 3))
        out[:, 0] = 1.0 / eps
        out[:, 2] = 1.0
        return out

    def adjoint_coupling(U, b, P):
        # Antisymmetric coupling from the h-dependence of the bottom term:
        # the dual depth equation gains +q_adj db/dx.
        qa = P[:, 1]
        out = np.zeros((U.shape[0], 3, 3))
        out[:, 0, 2] = -qa
        out[:, 2, 0] = qa
        return out

    def is_admissible(U, b):
        return U[:, 0] > H_FLOOR

    return ModelSpec(m=2, n=1, flux=flux, source=source, param_coupling=param_coupling,
                     flux_jacobian_U=flux_jacobian_U, flux_jacobian_b=flux_jacobian_b,
                     source_jacobian=source_jacobian, measurement=measurement,
                     measurement_gradient=measurement_gradient,
                     adjoint_coupling=adjoint_coupling, is_admissible=is_admissible)


class ShallowWaterUnified(UnifiedModel):
    """Unified shallow-water system on Q = [h, q, b, h_adj, q_adj].

    The dual block is posed on the two flow variables only: the gradient in
    b uses the closed form below rather than an adjoint component, so the
    parameter's dual never enters the evolution.  The 5x5 non-conservative
    matrix couples the dual momentum equation to db/dx with weight -q_adj.
    """

    layout = UnifiedLayout(m=2, n=1, adjoint=2)

    def __init__(self, eps: float):
        if not eps > 0:
            raise ValueError("eps must be positive")
        self.eps = float(eps)
        self.spec = shallow_water_spec(self.eps)

    # Local shorthands: c = h/eps - eps q^2/h^2, d = 2 eps q / h.
    def _cd(self, Q):
        h, q = Q[:, 0], Q[:, 1]
        return h / self.eps - self.eps * q ** 2 / h ** 2, 2.0 * self.eps * q / h

    def flux(self, Q):
        h, q = Q[:, 0], Q[:, 1]
        out = np.zeros_like(Q)
        out[:, 0] = self.eps * q
        out[:, 1] = self.eps * q ** 2 / h + 0.5 * h ** 2 / self.eps
        return out

    def flux_jac_mul(self, Q, V):
        c, d = self._cd(Q)
        out = np.zeros_like(V)
        out[:, 0] = self.eps * V[:, 1]
        out[:, 1] = c * V[:, 0] + d * V[:, 1]
        return out

    def abs_flux_jac_mul(self, Q, V):
        # Dissipation from the transport structure of the unified system:
        # the gravity-wave pair appears twice (flow block [[0,eps],[c,d]]
        # and its dual [[0,c],[eps,d]] share eigenvalues), plus a standing
        # mode carrying the bottom jump, projected out of the flow block
        # before applying |lambda|.  The curl-type dual coupling is handled
        # by the path-integrated jump terms, not here: folding it into the
        # dissipation would make the operator grow with the dual state.
        # Eigenvectors are parameterized by the wave speeds, regular through
        # sonic states.
        h, q = Q[:, 0], Q[:, 1]
        c, d = self._cd(Q)
        u = q / h
        root = np.sqrt(h)
        lam_m = self.eps * u - root
        lam_p = self.eps * u + root
        am, ap = np.abs(lam_m), np.abs(lam_p)
        spread = lam_p - lam_m
        w00 = (am * lam_p - ap * lam_m) / spread
        w11 = (ap * lam_p - am * lam_m) / spread
        grow = (ap - am) / spread
        prod = lam_m * lam_p
        vs0 = V[:, 0] + V[:, 2] * h / c  # remove the standing-mode content
        out = np.zeros_like(V)
        out[:, 0] = w00 * vs0 + self.eps * grow * V[:, 1]
        out[:, 1] = -(prod / self.eps) * grow * vs0 + w11 * V[:, 1]
        out[:, 3] = w00 * V[:, 3] + c * grow * V[:, 4]
        out[:, 4] = -(prod / c) * grow * V[:, 3] + w11 * V[:, 4]
        return out

    def b_mul(self, Q, V):
        h = Q[:, 0]
        qa = Q[:, 4]
        c, d = self._cd(Q)
        out = np.zeros_like(V)
        out[:, 1] = h * V[:, 2]
        out[:, 3] = c * V[:, 4]
        out[:, 4] = -qa * V[:, 2] + self.eps * V[:, 3] + d * V[:, 4]
        return out

    def free_surface(self, h, b):
        return (np.asarray(h) - 1.0) / self.eps + np.asarray(b)

    def source(self, Q, x, t, meas):
        out = np.zeros_like(Q)
        zeta = self.free_surface(Q[:, 0], Q[:, 2])
        out[:, 3] = (meas(x, t) - zeta) / self.eps
        return out

    def max_abs_eigenvalue(self, Q):
        h, q = Q[:, 0], Q[:, 1]
        return np.abs(q / h) * self.eps + np.sqrt(h)

    def check_admissible(self, Q, time):
        super().check_admissible(Q, time)
        bad = Q[:, 0] <= H_FLOOR
        if np.any(bad):
            i = int(np.argmax(bad))
            raise AdmissibilityError(
                f"dry water column h={Q[i, 0]:.3e} in cell {i} at t={time:.6g}")

    def build_initial_field(self, grid, estimate):
        fld = CellField.zeros(grid, self.layout)
        fld.data[grid.interior, 0] = 1.0
        fld.data[grid.interior, 2] = np.asarray(estimate, dtype=float)
        return fld

    def build_reference_state(self, grid, estimate):
        u0 = np.zeros((grid.cells, 2))
        u0[:, 0] = 1.0
        return u0, np.asarray(estimate, dtype=float).reshape(grid.cells, 1)

    def descent_gradient(self, adjoint0, trajectory, meas, grid):
        """Closed-form functional gradient (h - 1)/eps + b - zeta_bar.

        Evaluated at the final forward time; the higher-order h*q_adj
        correction is dropped so the step length stays meaningful away
        from 1.
        """
        final = trajectory.state_at(trajectory.n_levels - 1)
        zeta = self.free_surface(final[:, 0], final[:, 2])
        return zeta - meas(grid.centers, trajectory.times[-1])


# ---------------------------------------------------------------------------
# Targets
# ---------------------------------------------------------------------------

def swe_target(x, t):
    """Prescribed travelling free-surface pulse 0.3 (x - t) / cosh(x - t)^2."""
    s = np.asarray(x, dtype=float) - t
    return 0.3 * s / np.cosh(s) ** 2


def burgers_step_profile(x):
    return np.where(np.asarray(x, dtype=float) < 0.0, 0.5, 0.0)


def burgers_sine_profile(x):
    return np.sin(2.0 * np.pi * np.asarray(x, dtype=float))


def burgers_step_solution(x, t):
    """Entropy solution of the step datum: a shock travelling at speed 1/4."""
    return np.where(np.asarray(x, dtype=float) < 0.25 * t, 0.5, 0.0)


def burgers_sine_solution(x, t, newton_tol: float = 1e-13):
    """Characteristic solution of the sine datum, valid before shock onset.

    Solves q = sin(2 pi (x - q t)) per point by Newton iteration; the root
    is unique for t below the wave-breaking time 1/(2 pi).
    """
    x = np.asarray(x, dtype=float)
    q = np.sin(2.0 * np.pi * x)
    for _ in range(100):
        phase = 2.0 * np.pi * (x - q * t)
        residual = q - np.sin(phase)
        slope = 1.0 + 2.0 * np.pi * t * np.cos(phase)
        q -= residual / slope
        if np.max(np.abs(residual)) < newton_tol:
            break
    return q


def burgers_target(kind: str, grid: Grid, T: float, c_cfl: float = 0.1,
                   sampling: str = "exact"):
    """Burgers measurements for the recovery experiments.

    ``sampling='exact'`` evaluates the entropy solution of the true datum in
    closed form.  ``sampling='solver'`` instead runs the flow forward from
    the true profile and stores q(x, t) at every recorded level as a
    bilinear space-time table; note that such data make the optimum of the
    tracking functional coincide exactly with the true profile on the same
    grid, which removes the over/undershoot the sharp data produce.
    Returns the measurement data and the true initial profile at the cell
    centers.
    """
    if kind == "step":
        profile, solution = burgers_step_profile, burgers_step_solution
    elif kind == "sine":
        profile, solution = burgers_sine_profile, burgers_sine_solution
    else:
        raise ValueError(f"unknown Burgers target kind: {kind!r}")
    truth = profile(grid.centers)
    if sampling == "exact":
        return MeasurementData.from_function(solution), truth
    if sampling != "solver":
        raise ValueError(f"unknown sampling mode: {sampling!r}")
    model = BurgersUnified()
    field0 = model.build_initial_field(grid, truth)
    dt = stable_dt(field0, model, c_cfl)
    _, traj = solve_forward(field0, T, StepControls(c_cfl=c_cfl, dt=dt),
                            model, zero_measurement())
    table = np.stack([traj.state_at(k)[:, 0] for k in range(traj.n_levels)])
    meas = MeasurementData.from_table(traj.times, grid.centers, table)
    return meas, truth


# ---------------------------------------------------------------------------
# Closed-form shallow-water eigendecomposition
# ---------------------------------------------------------------------------

def swe_eigendecomposition(h: float, q: float, eps: float):
    """R, Lambda, R^(-1) of the unified flux Jacobian at a wet state.

    Uses the closed rational forms away from the sonic degeneracy
    q^2 eps^2 = h^3 where their denominators vanish; near it the wet block
    falls back to a dense eigendecomposition.
    """
    if not h > 0:
        raise ValueError("need positive depth")
    u = q / h
    root = np.sqrt(h)
    lam = np.zeros(5)
    lam[0] = eps * u - root
    lam[1] = eps * u + root
    R = np.eye(5)
    Rinv = np.eye(5)
    disc = q * q * eps * eps - h ** 3
    if abs(disc) < 1e-10 * h ** 3:
        a = np.array([[0.0, eps], [h / eps - eps * q * q / (h * h), 2.0 * eps * q / h]])
        vals, vecs = np.linalg.eig(a)
        order = np.argsort(vals.real)
        vals = vals.real[order]
        vecs = vecs.real[:, order]
        lam[0], lam[1] = vals
        R[:2, :2] = vecs
        Rinv[:2, :2] = np.linalg.inv(vecs)
    else:
        R[0, 0] = R[0, 1] = 1.0
        R[1, 0] = disc / (h * q * eps * eps + h ** 2.5 * eps)
        R[1, 1] = disc / (h * q * eps * eps - h ** 2.5 * eps)
        Rinv[0, 0] = disc / (2.0 * h ** 1.5 * q * eps - 2.0 * h ** 3)
        Rinv[0, 1] = -eps / (2.0 * root)
        Rinv[1, 0] = -disc / (2.0 * h ** 1.5 * q * eps + 2.0 * h ** 3)
        Rinv[1, 1] = eps / (2.0 * root)
    return R, np.diag(lam), Rinv


# ---------------------------------------------------------------------------
# Experiment presets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentPreset:
    """Complete configuration of one recovery experiment."""

    name: str
    grid: Grid
    t_final: float
    c_cfl: float
    lambda_ip: float
    iterations: int
    error_metric: str
    epsilon: float | None = None

    def unified_model(self) -> UnifiedModel:
        if self.name.startswith("burgers"):
            return BurgersUnified()
        return ShallowWaterUnified(self.epsilon)

    def initial_guess(self) -> np.ndarray:
        guesses = {"burgers_step": -0.2, "burgers_sine": 0.0, "swe_bottom": 0.2}
        return np.full(self.grid.cells, guesses[self.name])

    def make_measurement(self):
        """Measurement data plus the recovery reference (None if surface-based)."""
        if self.name == "burgers_step":
            return burgers_target("step", self.grid, self.t_final, self.c_cfl)
        if self.name == "burgers_sine":
            return burgers_target("sine", self.grid, self.t_final, self.c_cfl)
        return MeasurementData.from_function(swe_target), None


def make_preset(name: str, **overrides) -> ExperimentPreset:
    """The three built-in experiments; keyword overrides allow custom runs."""
    presets = {
        "burgers_step": dict(grid=Grid(-3.0, 3.0, 200), t_final=0.12, c_cfl=0.1,
                             lambda_ip=0.7, iterations=80,
                             error_metric="max_abs_vs_reference"),
        "burgers_sine": dict(grid=Grid(0.0, 1.0, 160), t_final=0.1, c_cfl=0.1,
                             lambda_ip=2.7, iterations=40,
                             error_metric="max_abs_vs_reference"),
        "swe_bottom": dict(grid=Grid(-10.0, 10.0, 300), t_final=3.0, c_cfl=0.1,
                           lambda_ip=1.9, iterations=40, epsilon=0.01,
                           error_metric="free_surface_max_abs"),
    }
    if name not in presets:
        raise ValueError(f"unknown preset: {name!r}")
    cfg = presets[name]
    cfg.update(overrides)
    return ExperimentPreset(name=name, **cfg)
