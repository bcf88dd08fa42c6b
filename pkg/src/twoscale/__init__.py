"""Periodic homogenization of elliptic problems with drifts and potential.

Bilinear finite elements on the unit square for oscillating problems
``A(x, x/delta)``, periodic cell correctors, effective coefficients, a
discrete unfolding operator and convergence studies.
"""

from .cell import CorrectorSet, normalize_mean_zero, solve_corrector_0, solve_corrector_i, solve_correctors
from .coeffs import PRESETS, TwoScaleCoefficient, evaluate, evaluate_delta, make_preset, verify_bounds
from .effective import (EffectiveCoefficients, assemble_effective, check_effective_ellipticity,
                        solve_homogenized)
from .errors import ConfigurationError, DiagnosticFailure, SolverError, UnsupportedModeError
from .forms import (AssembledForm, FormDiagnostics, assemble_delta_form, assemble_effective_form,
                    check_garding, check_sector, check_unit_contraction, estimate_beta0)
from .grid import DIRICHLET, PERIODIC, Grid, ScalarField, build_grid, h1_seminorm, integrate, l2_norm
from .solver import ResolventOperator, check_apriori, check_resolvent_identity, solve_variational
from .study import StudyConfig, StudyReport, run_convergence, run_resolvent_convergence
from .unfold import (UnfoldedField, UnfoldPartition, build_partition, check_integral_identity,
                     mean_Y, reconstruct_u1, two_scale_error, unfold)

__version__ = "0.1.0"

__all__ = [
    "assemble_delta_form", "assemble_effective", "assemble_effective_form", "AssembledForm",
    "build_grid", "build_partition", "check_apriori", "check_effective_ellipticity",
    "check_garding", "check_integral_identity", "check_resolvent_identity", "check_sector",
    "check_unit_contraction", "ConfigurationError", "CorrectorSet", "DiagnosticFailure",
    "DIRICHLET", "EffectiveCoefficients", "estimate_beta0", "evaluate", "evaluate_delta",
    "FormDiagnostics", "Grid", "h1_seminorm", "integrate", "l2_norm", "make_preset", "mean_Y",
    "normalize_mean_zero", "PERIODIC", "PRESETS", "reconstruct_u1", "ResolventOperator",
    "run_convergence", "run_resolvent_convergence", "ScalarField", "solve_corrector_0",
    "solve_corrector_i", "solve_correctors", "solve_homogenized", "solve_variational",
    "SolverError", "StudyConfig", "StudyReport", "two_scale_error", "TwoScaleCoefficient",
    "unfold", "UnfoldedField", "UnfoldPartition", "UnsupportedModeError", "verify_bounds",
]
