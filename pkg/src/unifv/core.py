"""Domain types and unified-system assembly.

The solver evolves one "unified" vector per cell that stacks the physical
state U, the spatially frozen model parameters b (lifted into the state so
that parameter identification becomes an initial-condition problem), and the
adjoint variables P of a quadratic tracking functional.  A single
finite-volume scheme integrates this vector forward or backward in time
under a direction flag eta (see :mod:`unifv.ader`).

Model callables follow a batch convention: state arguments have shape
``(k, m)`` and parameter arguments ``(k, n)``, where ``k`` is the number of
cells being evaluated at once.  ``n = 0`` is legal everywhere; the empty
axes propagate through numpy without special cases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class EvaluationError(RuntimeError):
    """A model callable produced non-finite values."""


class NonInvertibleJacobianError(EvaluationError):
    """The flux Jacobian is singular where invertibility is required."""


class NonDiagonalizableError(EvaluationError):
    """A matrix lacks a real eigendecomposition at an interface state."""


class StationaryDataError(RuntimeError):
    """All wave speeds of the initial data vanish; no CFL step exists."""


class AdmissibilityError(RuntimeError):
    """A time step produced an inadmissible state (e.g. dry water column)."""


class TrajectoryMismatchError(RuntimeError):
    """Recorded trajectory is inconsistent with the requested replay."""


# ---------------------------------------------------------------------------
# Grid and fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform 1-D cell grid with ghost layers.

    Cell i (interior index) occupies [x_min + i*dx, x_min + (i+1)*dx] and has
    barycenter x_min + (i + 1/2)*dx.  Ghost cells replicate the nearest
    interior value under transmissive boundary fill.
    """

    x_min: float
    x_max: float
    cells: int
    ghost_layers: int = 2

    def __post_init__(self):
        if self.cells < 1:
            raise ValueError("grid needs at least one cell")
        if self.ghost_layers < 1:
            raise ValueError("grid needs at least one ghost layer")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.cells

    @property
    def total_cells(self) -> int:
        return self.cells + 2 * self.ghost_layers

    @property
    def interior(self) -> slice:
        return slice(self.ghost_layers, self.ghost_layers + self.cells)

    @property
    def centers(self) -> np.ndarray:
        """Barycenters of the interior cells."""
        i = np.arange(self.cells)
        return self.x_min + (i + 0.5) * self.dx

    def all_centers(self) -> np.ndarray:
        """Barycenters including ghost cells."""
        i = np.arange(self.total_cells) - self.ghost_layers
        return self.x_min + (i + 0.5) * self.dx


@dataclass(frozen=True)
class UnifiedLayout:
    """Slice bookkeeping for a unified per-cell vector.

    Components are ordered [state (m), params (n), adjoint].  The generic
    construction uses ``adjoint = m + n``; a model may declare a shorter
    adjoint block when its dual system is posed on fewer variables.
    """

    m: int
    n: int
    adjoint: int

    @property
    def size(self) -> int:
        return self.m + self.n + self.adjoint

    @property
    def state_slice(self) -> slice:
        return slice(0, self.m)

    @property
    def param_slice(self) -> slice:
        return slice(self.m, self.m + self.n)

    @property
    def forward_slice(self) -> slice:
        """State plus parameters: the part recorded during forward solves."""
        return slice(0, self.m + self.n)

    @property
    def adjoint_slice(self) -> slice:
        return slice(self.m + self.n, self.size)


def generic_layout(m: int, n: int) -> UnifiedLayout:
    return UnifiedLayout(m=m, n=n, adjoint=m + n)


@dataclass
class UnifiedState:
    """One cell's unified vector with named views."""

    q: np.ndarray
    layout: UnifiedLayout

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if self.q.shape != (self.layout.size,):
            raise ValueError(
                f"unified vector has length {self.q.shape}, "
                f"layout expects {self.layout.size}")

    @property
    def state(self) -> np.ndarray:
        return self.q[self.layout.state_slice]

    @property
    def params(self) -> np.ndarray:
        return self.q[self.layout.param_slice]

    @property
    def adjoint(self) -> np.ndarray:
        return self.q[self.layout.adjoint_slice]


@dataclass
class CellField:
    """Cell averages of the unified vector on a grid, at one time level.

    ``data`` has shape (total_cells, layout.size).  Snapshots are treated as
    immutable once a time step commits; operations return new fields.
    """

    grid: Grid
    layout: UnifiedLayout
    data: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        expected = (self.grid.total_cells, self.layout.size)
        if self.data.shape != expected:
            raise ValueError(f"field data has shape {self.data.shape}, expected {expected}")

    @classmethod
    def zeros(cls, grid: Grid, layout: UnifiedLayout, time: float = 0.0) -> "CellField":
        return cls(grid, layout, np.zeros((grid.total_cells, layout.size)), time)

    @property
    def interior(self) -> np.ndarray:
        return self.data[self.grid.interior]

    def copy(self) -> "CellField":
        return CellField(self.grid, self.layout, self.data.copy(), self.time)

    def cell(self, i: int) -> UnifiedState:
        """Interior cell i as a UnifiedState (copy)."""
        return UnifiedState(self.data[self.grid.ghost_layers + i].copy(), self.layout)


def _fill_ghosts(data: np.ndarray, g: int) -> None:
    data[:g] = data[g]
    data[-g:] = data[-g - 1]


def fill_transmissive(field: CellField) -> CellField:
    """Copy the nearest interior value into every ghost cell."""
    out = field.copy()
    _fill_ghosts(out.data, field.grid.ghost_layers)
    return out


# ---------------------------------------------------------------------------
# Constraint-level model description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """Descriptor of a constraint PDE  dU/dt + dR/dx = L + Btil db/dx.

    All callables are vectorized over a leading batch axis:

    - flux(U, b) -> (k, m)
    - source(U, b) -> (k, m)
    - param_coupling(U, b) -> (k, m, n)          # Btil
    - flux_jacobian_U(U, b) -> (k, m, m)         # dR/dU
    - flux_jacobian_b(U, b) -> (k, m, n)         # dR/db
    - source_jacobian(U, b) -> (k, m, m + n)     # dL/d(U, b)
    - measurement(U, b) -> (k,)                  # scalar field psi
    - measurement_gradient(U, b) -> (k, m + n)   # grad of psi w.r.t. (U, b)
    - adjoint_coupling(U, b, P) -> (k, m+n, m+n) # optional closed-form D
    - is_admissible(U, b) -> (k,) bool           # optional
    """

    m: int
    n: int
    flux: Callable
    source: Callable
    param_coupling: Callable
    flux_jacobian_U: Callable
    flux_jacobian_b: Callable
    source_jacobian: Callable
    measurement: Callable
    measurement_gradient: Callable
    adjoint_coupling: Callable | None = None
    is_admissible: Callable | None = None


def _as_batch(U, width: int) -> np.ndarray:
    a = np.asarray(U, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, width) if width else a.reshape(1, 0)
    return a


def assemble_extended_jacobian(model: ModelSpec, U, b) -> np.ndarray:
    """Jacobian of the parameter-lifted system for a single state.

    Returns the (m+n) x (m+n) block matrix
    [[dR/dU, dR/db - Btil], [0, 0]].
    """
    Ub = _as_batch(U, model.m)
    bb = _as_batch(b, model.n)
    ju = model.flux_jacobian_U(Ub, bb)[0]
    jb = model.flux_jacobian_b(Ub, bb)[0]
    bt = model.param_coupling(Ub, bb)[0]
    if not np.all(np.isfinite(ju)):
        raise EvaluationError("non-finite entries in the flux Jacobian block dR/dU")
    if not (np.all(np.isfinite(jb)) and np.all(np.isfinite(bt))):
        raise EvaluationError("non-finite entries in the parameter block dR/db - Btil")
    mn = model.m + model.n
    out = np.zeros((mn, mn))
    out[: model.m, : model.m] = ju
    out[: model.m, model.m:] = jb - bt
    return out


def extended_eigenstructure(model: ModelSpec, U, b):
    """Eigenvalues and eigenvectors of the parameter-lifted Jacobian.

    The lifted system keeps the m flux eigenvalues and gains n zero
    eigenvalues whose eigenvectors are [V_j, e_j] with
    V_j = -(dR/dU)^{-1} (dR/db - Btil)_j.  Requires dR/dU invertible.
    """
    Ub = _as_batch(U, model.m)
    bb = _as_batch(b, model.n)
    ju = model.flux_jacobian_U(Ub, bb)[0]
    vals, vecs = np.linalg.eig(ju)
    if np.max(np.abs(vals.imag)) > 1e-10 * max(1.0, np.max(np.abs(vals.real))):
        raise NonDiagonalizableError("complex flux eigenvalues")
    vals = vals.real
    vecs = vecs.real
    if np.min(np.abs(vals)) <= 1e-12 * max(1.0, np.max(np.abs(vals))):
        raise NonInvertibleJacobianError(
            "non-invertible flux Jacobian: a flux eigenvalue vanishes")
    mn = model.m + model.n
    coupling = model.flux_jacobian_b(Ub, bb)[0] - model.param_coupling(Ub, bb)[0]
    eigvals = np.concatenate([vals, np.zeros(model.n)])
    eigvecs = np.zeros((mn, mn))
    eigvecs[: model.m, : model.m] = vecs
    if model.n:
        vtil = -np.linalg.solve(ju, coupling)
        eigvecs[: model.m, model.m:] = vtil
        eigvecs[model.m:, model.m:] = np.eye(model.n)
    normalized = eigvecs / np.linalg.norm(eigvecs, axis=0, keepdims=True)
    if abs(np.linalg.det(normalized)) < 1e-10:
        raise NonDiagonalizableError("lifted eigenvectors are not independent")
    return eigvals, eigvecs


def validate_flux_jacobian(model: ModelSpec, U, b, rel_tol: float = 1e-6) -> float:
    """Max relative deviation of dR/dU from a central difference of the flux."""
    Ub = _as_batch(U, model.m)
    bb = _as_batch(b, model.n)
    ju = model.flux_jacobian_U(Ub, bb)[0]
    fd = np.zeros_like(ju)
    for j in range(model.m):
        h = 1e-6 * (1.0 + abs(Ub[0, j]))
        up = Ub.copy()
        um = Ub.copy()
        up[0, j] += h
        um[0, j] -= h
        fd[:, j] = (model.flux(up, bb)[0] - model.flux(um, bb)[0]) / (2 * h)
    scale = max(1.0, float(np.max(np.abs(ju))))
    dev = float(np.max(np.abs(ju - fd))) / scale
    if dev > rel_tol:
        raise EvaluationError(f"analytic flux Jacobian deviates from finite difference by {dev:.2e}")
    return dev


# ---------------------------------------------------------------------------
# Measurement data
# ---------------------------------------------------------------------------

class MeasurementData:
    """The target field psi_bar(x, t), callable with x arrays and scalar t."""

    def __init__(self, fn: Callable):
        self._fn = fn

    def __call__(self, x, t: float) -> np.ndarray:
        return np.asarray(self._fn(np.asarray(x, dtype=float), float(t)), dtype=float)

    @classmethod
    def from_function(cls, fn: Callable) -> "MeasurementData":
        return cls(fn)

    @classmethod
    def from_table(cls, times, positions, values) -> "MeasurementData":
        """Bilinear interpolation of a stored space-time table.

        Arguments outside the table range are clamped to the nearest slice,
        consistent with transmissive boundaries.
        """
        times = np.asarray(times, dtype=float)
        positions = np.asarray(positions, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.shape != (times.size, positions.size):
            raise ValueError("table shape does not match times x positions")
        if times.size < 1:
            raise ValueError("table needs at least one time level")

        def fn(x, t):
            if times.size == 1:
                return np.interp(x, positions, values[0])
            tc = min(max(t, times[0]), times[-1])
            k = int(np.searchsorted(times, tc, side="right") - 1)
            k = min(max(k, 0), times.size - 2)
            w = (tc - times[k]) / (times[k + 1] - times[k])
            lo = np.interp(x, positions, values[k])
            hi = np.interp(x, positions, values[k + 1])
            return (1.0 - w) * lo + w * hi

        return cls(fn)


def zero_measurement() -> MeasurementData:
    return MeasurementData(lambda x, t: np.zeros_like(np.asarray(x, dtype=float)))


# ---------------------------------------------------------------------------
# Trajectory recording
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryStore:
    """Forward-in-time history of the (state, params) block of every cell.

    Level k holds a copy of the interior cells' first m+n components at time
    ``times[k]``; ``dts[k]`` is the step that advanced level k to level k+1.
    Replay during backward sweeps returns exactly the recorded arrays.
    """

    grid: Grid
    layout: UnifiedLayout
    times: list = field(default_factory=list)
    dts: list = field(default_factory=list)
    levels: list = field(default_factory=list)

    def record(self, fld: CellField) -> None:
        self.times.append(float(fld.time))
        self.levels.append(fld.interior[:, self.layout.forward_slice].copy())

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def state_at(self, k: int) -> np.ndarray:
        return self.levels[k]

    def validate(self) -> None:
        if self.n_levels < 2:
            raise TrajectoryMismatchError("trajectory has fewer than two levels")
        if len(self.dts) != self.n_levels - 1:
            raise TrajectoryMismatchError("trajectory step list does not match levels")


# ---------------------------------------------------------------------------
# Unified models
# ---------------------------------------------------------------------------

class UnifiedModel:
    """Evaluation interface of a unified system

        dQ/dt + dF/dx + B(Q) dQ/dx = S(Q),    Q = [U, b, P].

    Subclasses supply vectorized products against the flux Jacobian
    A = dF/dQ, its absolute value |A| = R |Lambda| R^{-1}, and the
    non-conservative matrix B.  ``quasilinear_mul`` applies the full system
    matrix A + B used by the space-time predictor.
    """

    layout: UnifiedLayout
    spec: ModelSpec

    # --- algebra ---------------------------------------------------------
    def flux(self, Q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def flux_jac_mul(self, Q: np.ndarray, V: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def abs_flux_jac_mul(self, Q: np.ndarray, V: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def b_mul(self, Q: np.ndarray, V: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def quasilinear_mul(self, Q: np.ndarray, V: np.ndarray) -> np.ndarray:
        return self.flux_jac_mul(Q, V) + self.b_mul(Q, V)

    def source(self, Q: np.ndarray, x: np.ndarray, t: float, meas: MeasurementData) -> np.ndarray:
        raise NotImplementedError

    def max_abs_eigenvalue(self, Q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def check_admissible(self, Q: np.ndarray, time: float) -> None:
        bad = ~np.all(np.isfinite(Q), axis=1)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise AdmissibilityError(f"non-finite state in cell {i} at t={time:.6g}")

    # --- optimization hooks ------------------------------------------------
    def build_initial_field(self, grid: Grid, estimate: np.ndarray) -> CellField:
        raise NotImplementedError

    def build_reference_state(self, grid: Grid, estimate: np.ndarray):
        """Initial (U, b) arrays for the reference scheme."""
        raise NotImplementedError

    def descent_gradient(self, adjoint0: np.ndarray, trajectory: TrajectoryStore,
                         meas: MeasurementData, grid: Grid) -> np.ndarray:
        """Default gradient: the adjoint block paired with the sought variable.

        Parameter identification (n > 0) reads the adjoint components paired
        with b; initial-condition recovery (n == 0) reads the components
        paired with the state itself, all at t = 0.
        """
        m, n = self.layout.m, self.layout.n
        if n == 0:
            g = adjoint0[:, :m]
        else:
            g = adjoint0[:, m:m + n]
        return g[:, 0] if g.shape[1] == 1 else g


class GenericUnifiedModel(UnifiedModel):
    """Unified system assembled from a ModelSpec alone.

    The adjoint block has the full m+n components.  The curl-type coupling
    matrix D is assembled from finite differences of the lifted Jacobian
    unless the spec provides a closed form.  This path favours clarity over
    speed; the built-in models override every product with vectorized
    closed forms.
    """

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.layout = generic_layout(spec.m, spec.n)

    # dense helpers -------------------------------------------------------
    def _split(self, Q):
        lay = self.layout
        return Q[:, lay.state_slice], Q[:, lay.param_slice], Q[:, lay.adjoint_slice]

    def flux(self, Q):
        U, b, _ = self._split(Q)
        out = np.zeros_like(Q)
        out[:, : self.spec.m] = self.spec.flux(U, b)
        return out

    def _flux_jacobian_dense(self, Q):
        U, b, _ = self._split(Q)
        k = Q.shape[0]
        m, n = self.spec.m, self.spec.n
        A = np.zeros((k, self.layout.size, self.layout.size))
        A[:, :m, :m] = self.spec.flux_jacobian_U(U, b)
        A[:, :m, m:m + n] = self.spec.flux_jacobian_b(U, b)
        return A

    def flux_jac_mul(self, Q, V):
        return np.einsum("kij,kj->ki", self._flux_jacobian_dense(Q), V)

    def abs_flux_jac_mul(self, Q, V):
        # Interface dissipation uses the transport structure (lifted
        # Jacobian and its transpose; the curl-type coupling is handled by
        # the jump terms).  Defective eigenstructure surfaces as an error
        # instead of being averaged away.
        from .riemann import matrix_abs
        A = self._flux_jacobian_dense(Q) + self._b_dense(Q, include_coupling=False)
        out = np.empty_like(V)
        for i in range(Q.shape[0]):
            out[i] = matrix_abs(A[i]) @ V[i]
        return out

    def coupling_matrix(self, Q) -> np.ndarray:
        """The antisymmetric-second-derivative coupling D, shape (k, m+n, m+n)."""
        U, b, P = self._split(Q)
        mn = self.spec.m + self.spec.n
        if self.spec.adjoint_coupling is not None:
            return self.spec.adjoint_coupling(U, b, P)
        k = Q.shape[0]
        D = np.zeros((k, mn, mn))
        for c in range(k):
            utl = np.concatenate([U[c], b[c]])
            grads = []
            for j in range(mn):
                h = 1e-6 * (1.0 + abs(utl[j]))
                up = utl.copy()
                um = utl.copy()
                up[j] += h
                um[j] -= h
                jp = assemble_extended_jacobian(self.spec, up[: self.spec.m], up[self.spec.m:])
                jm = assemble_extended_jacobian(self.spec, um[: self.spec.m], um[self.spec.m:])
                grads.append((jp - jm) / (2 * h))
            for kk in range(mn):
                for j in range(mn):
                    D[c, kk, j] = np.dot(grads[j][:, kk] - grads[kk][:, j], P[c])
        return D

    def _b_dense(self, Q, include_coupling: bool = True):
        U, b, _ = self._split(Q)
        k = Q.shape[0]
        mn = self.spec.m + self.spec.n
        B = np.zeros((k, self.layout.size, self.layout.size))
        D = self.coupling_matrix(Q) if include_coupling else None
        for c in range(k):
            jr = assemble_extended_jacobian(self.spec, U[c], b[c])
            if include_coupling:
                B[c, mn:, :mn] = D[c]
            B[c, mn:, mn:] = jr.T
        return B

    def b_mul(self, Q, V):
        return np.einsum("kij,kj->ki", self._b_dense(Q), V)

    def source(self, Q, x, t, meas):
        U, b, P = self._split(Q)
        out = np.zeros_like(Q)
        out[:, : self.spec.m] = self.spec.source(U, b)
        mismatch = meas(x, t) - self.spec.measurement(U, b)
        grad = self.spec.measurement_gradient(U, b)
        jl = self.spec.source_jacobian(U, b)  # (k, m, m+n)
        out[:, self.layout.adjoint_slice] = (
            mismatch[:, None] * grad
            - np.einsum("kij,ki->kj", jl, P[:, : self.spec.m]))
        return out

    def max_abs_eigenvalue(self, Q):
        U, b, _ = self._split(Q)
        k = Q.shape[0]
        out = np.zeros(k)
        for c in range(k):
            jr = assemble_extended_jacobian(self.spec, U[c], b[c])
            out[c] = np.max(np.abs(np.linalg.eigvals(jr)))
        return out

    def check_admissible(self, Q, time):
        super().check_admissible(Q, time)
        if self.spec.is_admissible is not None:
            U, b, _ = self._split(Q)
            ok = self.spec.is_admissible(U, b)
            if not np.all(ok):
                i = int(np.argmax(~ok))
                raise AdmissibilityError(f"inadmissible state in cell {i} at t={time:.6g}")


def unify(model: "ModelSpec | UnifiedModel") -> UnifiedModel:
    if isinstance(model, UnifiedModel):
        return model
    return GenericUnifiedModel(model)


def assemble_unified(model, meas: MeasurementData, Q, x: float = 0.0, t: float = 0.0):
    """Dense (F, B, S) blocks of the unified system at a single state.

    ``model`` may be a ModelSpec (generic construction) or a UnifiedModel
    with closed forms.  B is recovered column-wise from products with basis
    vectors, so the dense view and the fast path cannot drift apart.
    """
    um = unify(model)
    qv = Q.q if isinstance(Q, UnifiedState) else np.asarray(Q, dtype=float)
    Qb = qv.reshape(1, -1)
    if Qb.shape[1] != um.layout.size:
        raise ValueError(f"state has {Qb.shape[1]} components, expected {um.layout.size}")
    F = um.flux(Qb)[0]
    K = um.layout.size
    B = np.zeros((K, K))
    eye = np.eye(K)
    for j in range(K):
        B[:, j] = um.b_mul(Qb, eye[j].reshape(1, -1))[0]
    S = um.source(Qb, np.array([float(x)]), float(t), meas)[0]
    for name, block in (("F", F), ("B", B), ("S", S)):
        if not np.all(np.isfinite(block)):
            raise EvaluationError(f"non-finite entries in unified block {name}")
    return F, B, S
