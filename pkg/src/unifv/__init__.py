"""Unified forward/backward finite-volume solver for adjoint-based control
of 1-D hyperbolic balance laws."""

from .ader import (Predictor, StepControls, build_predictor, interface_states,
                   minmod_slope, solve_backward, solve_forward, stable_dt, step)
from .core import (AdmissibilityError, CellField, EvaluationError,
                   GenericUnifiedModel, Grid, MeasurementData, ModelSpec,
                   NonDiagonalizableError, NonInvertibleJacobianError,
                   StationaryDataError, TrajectoryMismatchError, TrajectoryStore,
                   UnifiedLayout, UnifiedModel, UnifiedState,
                   assemble_extended_jacobian, assemble_unified,
                   extended_eigenstructure, fill_transmissive, generic_layout,
                   unify, zero_measurement)
from .models import (BurgersUnified, ExperimentPreset, ShallowWaterUnified,
                     burgers_spec, burgers_target, make_preset,
                     shallow_water_spec, swe_eigendecomposition, swe_target)
from .optimize import (OptimConfig, OptimHistory, error_metric, evaluate_cost,
                       gradient, measurement_error, run, update_parameters)
from .reference import (RefFields, ref_backward_step, ref_forward_step, ref_run,
                        ref_solve_backward, ref_solve_forward)
from .riemann import (GAUSS3, PathQuadrature, dot_flux, gauss_legendre_path,
                      jump_term, matrix_abs, rusanov_flux, segment_path)

__version__ = "0.1.0"
