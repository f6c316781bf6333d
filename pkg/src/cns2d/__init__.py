"""Pseudo-spectral Galerkin solver for the sphere-constrained 2D Navier-Stokes
equations on the torus, with linearised and adjoint solvers and adjoint-based
optimal control."""

from .control import (CostBreakdown, OptimizationReport, PGDOptions, admissible_project, cost_J,
                      gradient_check, lagrangian_dU, lagrangian_dy, lagrangian_eval,
                      make_admissible, optimality_residuals, optimize_pgd, reduced_gradient,
                      weak_form_residual, weak_form_residuals)
from .dynamics import (ForcingSpec, SolverConfig, Trajectory, energy_identity_residual,
                       export_trajectory, load_trajectory, rhs_galerkin, solve_state, step,
                       truncate)
from .errors import ConfigError, DivergenceError, InputError
from .linearization import (LinearizedOperator, adjoint_rhs, bprime_adjoint_apply, bprime_apply,
                            duality_record, linearized_rhs, lipschitz_probe, solve_adjoint,
                            solve_linearized, taylor_records)
from .sampling import RandomFieldSpec, random_control, random_field, random_fields
from .series import ControlTrajectory, FieldSeries
from .spectral import (DivFreeField, GridError, NormTriple, RealityError, WaveGrid, constraint_Q,
                       inner_H, inner_V, leray_project, make_grid, nonlinear_B, norms,
                       projected_drift, read_field_csv, stokes_apply, stokes_inverse,
                       tangent_project, to_physical, to_spectral, transfer, trilinear_b,
                       write_field_csv)

__version__ = "0.1.0"
