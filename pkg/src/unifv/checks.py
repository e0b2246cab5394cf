"""Property suites behind the ``check`` subcommand.

Each check returns a result record with the worst observed deviation so the
CLI can print one line per suite and the tests can assert the same bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ader import StepControls, solve_backward, solve_forward, stable_dt
from .core import GenericUnifiedModel, MeasurementData, zero_measurement
from .models import (BurgersUnified, ShallowWaterUnified, burgers_spec,
                     swe_eigendecomposition)
from .optimize import evaluate_cost, gradient
from .riemann import dot_flux


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    bound: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst {self.worst:.3e} (bound {self.bound:.1e})"


def _random_burgers_states(rng, k):
    q = rng.uniform(-2.0, 2.0, size=(k, 1))
    p = rng.normal(size=(k, 1))
    return np.concatenate([q, p], axis=1)


def _random_swe_states(rng, k):
    h = rng.uniform(0.5, 2.0, size=k)
    q = rng.uniform(-0.3, 0.3, size=k)
    b = rng.uniform(-0.5, 0.5, size=k)
    adj = rng.normal(size=(k, 2))
    return np.column_stack([h, q, b, adj])


def check_dot_consistency(rng, samples: int = 1000, bound: float = 1e-14) -> CheckResult:
    """dot_flux(Q, Q, eta) must equal the physical flux exactly."""
    worst = 0.0
    for model, states in ((BurgersUnified(), _random_burgers_states(rng, samples)),
                          (ShallowWaterUnified(0.01), _random_swe_states(rng, samples))):
        for eta in (1, -1):
            diff = dot_flux(model, states, states, eta) - model.flux(states)
            worst = max(worst, float(np.max(np.abs(diff))))
    return CheckResult("interface flux consistency", worst <= bound, worst, bound)


def check_swe_eigendecomposition(rng, samples: int = 1000, bound: float = 1e-10) -> CheckResult:
    """R Lambda R^-1 must reproduce the wet flux-Jacobian block."""
    model = ShallowWaterUnified(0.01)
    worst = 0.0
    for _ in range(samples):
        h = rng.uniform(0.5, 2.0)
        q = rng.uniform(-0.3, 0.3)
        R, lam, Rinv = swe_eigendecomposition(h, q, model.eps)
        a = np.zeros((5, 5))
        a[0, 1] = model.eps
        a[1, 0] = h / model.eps - model.eps * q ** 2 / h ** 2
        a[1, 1] = 2.0 * model.eps * q / h
        worst = max(worst, float(np.max(np.abs(R @ lam @ Rinv - a))))
    return CheckResult("shallow-water eigendecomposition", worst <= bound, worst, bound)


def check_lifted_eigenstructure(rng, samples: int = 200, bound: float = 1e-10) -> CheckResult:
    """The lifted system gains exactly n zero speeds with independent vectors."""
    from .core import extended_eigenstructure
    from .models import shallow_water_spec
    spec = shallow_water_spec(0.01)
    worst = 0.0
    ok = True
    for _ in range(samples):
        U = np.array([rng.uniform(0.5, 2.0), rng.uniform(-0.3, 0.3)])
        b = np.array([rng.uniform(-0.5, 0.5)])
        vals, vecs = extended_eigenstructure(spec, U, b)
        zeros = np.sum(np.abs(vals) <= 1e-12)
        ok = ok and zeros == spec.n
        normalized = vecs / np.linalg.norm(vecs, axis=0, keepdims=True)
        det = abs(np.linalg.det(normalized))
        ok = ok and det > 1e-10
        worst = max(worst, float(np.max(np.abs(vals[spec.m:]))))
    return CheckResult("lifted eigenstructure", ok and worst <= bound, worst, bound)


def check_burgers_coupling_zero(bound: float = 1e-12) -> CheckResult:
    """The curl-type coupling D vanishes for the conservative Burgers system."""
    gm = GenericUnifiedModel(burgers_spec())
    states = np.array([[0.7, 0.3], [-1.4, 2.0], [2.5, -0.8]])
    D = gm.coupling_matrix(states)
    worst = float(np.max(np.abs(D)))
    return CheckResult("conservative coupling vanishes", worst <= bound, worst, bound)


def _total_variation(values: np.ndarray) -> float:
    return float(np.sum(np.abs(np.diff(values))))


def check_minmod_tvd(rng, runs: int = 100, bound: float = 1e-12) -> CheckResult:
    """Monotone Burgers data must keep total variation non-increasing."""
    from .core import Grid
    model = BurgersUnified()
    worst = -np.inf
    for _ in range(runs):
        n = int(rng.integers(30, 60))
        grid = Grid(-1.0, 1.0, n)
        base = np.sort(rng.uniform(-1.0, 1.0, size=n))
        if rng.random() < 0.5:
            base = base[::-1].copy()
        field0 = model.build_initial_field(grid, base)
        dt = stable_dt(field0, model, 0.1)
        _, traj = solve_forward(field0, 20 * dt, StepControls(dt=dt), model,
                                zero_measurement())
        tv = [_total_variation(traj.state_at(k)[:, 0]) for k in range(traj.n_levels)]
        worst = max(worst, float(np.max(np.diff(tv))))
    return CheckResult("minmod TVD on monotone data", worst <= bound, worst, bound)


def check_mass_conservation(bound: float = 1e-12) -> CheckResult:
    """Cell sums of conservative components move only through the boundary."""
    from .core import Grid
    worst = 0.0
    # Burgers: compactly supported bump, no boundary flux over the run.
    model = BurgersUnified()
    grid = Grid(-2.0, 2.0, 120)
    x = grid.centers
    bump = np.where(np.abs(x) < 0.6, 0.4 * np.cos(np.pi * x / 1.2) ** 2, 0.0)
    field0 = model.build_initial_field(grid, bump)
    dt = stable_dt(field0, model, 0.1)
    _, traj = solve_forward(field0, 25 * dt, StepControls(dt=dt), model,
                            zero_measurement())
    sums = np.array([np.sum(traj.state_at(k)[:, 0]) * grid.dx
                     for k in range(traj.n_levels)])
    worst = max(worst, float(np.max(np.abs(np.diff(sums)))))
    # Shallow water: depth is conservative; the surface bump is exactly
    # compact so no wave reaches the boundary during the run.
    swe = ShallowWaterUnified(0.01)
    grid2 = Grid(-5.0, 5.0, 80)
    x2 = grid2.centers
    zeta0 = np.where(np.abs(x2) < 2.0, 0.3 * np.cos(np.pi * x2 / 4.0) ** 2, 0.0)
    fld = swe.build_initial_field(grid2, np.zeros(grid2.cells))
    fld.data[grid2.interior, 0] = 1.0 + swe.eps * zeta0
    dt2 = stable_dt(fld, swe, 0.1)
    _, traj2 = solve_forward(fld, 10 * dt2, StepControls(dt=dt2), swe,
                             MeasurementData.from_function(lambda x_, t: np.zeros_like(x_)))
    sums2 = np.array([np.sum(traj2.state_at(k)[:, 0]) * grid2.dx
                      for k in range(traj2.n_levels)])
    worst = max(worst, float(np.max(np.abs(np.diff(sums2)))))
    return CheckResult("mass conservation per step", worst <= bound, worst, bound)


def gradient_fd_pairs(rng, directions: int = 10):
    """(adjoint, finite-difference) directional derivatives on smooth Burgers.

    20 cells, horizon 0.05, central differences with step 1e-4 along random
    unit-amplitude directions.
    """
    from dataclasses import replace

    from .core import Grid
    from .models import burgers_target
    model = BurgersUnified()
    grid = Grid(0.0, 1.0, 20)
    T = 0.05
    meas, _ = burgers_target("sine", grid, T)
    base = 0.5 * np.sin(2.0 * np.pi * grid.centers)

    field0 = model.build_initial_field(grid, base)
    dt = stable_dt(field0, model, 0.1)
    ctrl = StepControls(dt=dt)

    def cost_of(h0):
        f0 = model.build_initial_field(grid, h0)
        _, traj = solve_forward(f0, T, ctrl, model, meas)
        return evaluate_cost(traj, meas, model)

    _, traj = solve_forward(field0, T, ctrl, model, meas)
    adj0 = solve_backward(traj, replace(ctrl, eta=-1), model, meas)
    g = gradient(adj0, traj, model, meas)

    eps_fd = 1e-4
    pairs = []
    for _ in range(directions):
        direction = rng.normal(size=grid.cells)
        direction /= np.max(np.abs(direction))
        fd = (cost_of(base + eps_fd * direction)
              - cost_of(base - eps_fd * direction)) / (2.0 * eps_fd)
        adj = float(np.dot(g, direction)) * grid.dx
        pairs.append((adj, fd))
    return np.array(pairs)


def check_gradient_vs_fd(rng, directions: int = 10, bound: float = 5e-2) -> CheckResult:
    """Adjoint directional derivatives against central finite differences.

    The comparison is the relative error over the whole direction set: a
    single direction drawn nearly orthogonal to the gradient has a
    vanishing denominator and would measure noise, not the
    differentiate/discretize gap this guards.
    """
    pairs = gradient_fd_pairs(rng, directions)
    adj, fd = pairs[:, 0], pairs[:, 1]
    rel = float(np.linalg.norm(adj - fd) / np.linalg.norm(fd))
    return CheckResult("adjoint gradient vs finite differences", rel <= bound,
                       rel, bound)


def run_all(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    return [
        check_dot_consistency(rng),
        check_swe_eigendecomposition(rng),
        check_lifted_eigenstructure(rng),
        check_burgers_coupling_zero(),
        check_minmod_tvd(rng),
        check_mass_conservation(),
        check_gradient_vs_fd(rng),
    ]
