"""Pseudo-spectral gradient-flow solvers with auxiliary-variable integrators.

Periodic two-dimensional phase-field models (Allen-Cahn, Cahn-Hilliard, a
stabilized Cahn-Hilliard variant, and a phase-field-crystal equation) stepped
by energy-stable one- and two-step schemes built on scalar or pointwise
auxiliary variables, plus the benchmarking harness used to study their
convergence, energy dissipation, and cost.
"""

from .errors import (
    AuxiliaryDegeneracyError,
    ConfigurationError,
    GradflowError,
    NonFiniteError,
    RadicandNegativeError,
    SolverDivergenceError,
    SymbolSignError,
    UsageError,
)
from .spectral import (
    Grid2D,
    OperatorSymbol,
    ScalarField2D,
    apply_operator,
    dealias_pass,
    forward,
    inner_product,
    integrate,
    inverse,
    l2_norm,
    make_grid,
    reset_solve_count,
    solve_count,
    solve_implicit,
)
from .models import (
    MODEL_NAMES,
    EnergyRecord,
    ModelSpec,
    PotentialSpec,
    chemical_potential,
    energy,
    make_model,
    nonlinear_energy,
)
from .schemes import (
    SCHEME_KINDS,
    FieldQ,
    ScalarEta,
    ScalarR,
    SchemeConfig,
    StepState,
    aux_scalar,
    init_state,
    modified_energy,
    resolve_c,
    startup_half_step,
    step,
    step_3sieq,
    step_3ssav,
    step_3ssav_sqrt,
    step_ieq,
    step_sav,
)
from .diagnostics import (
    PRESET_NAMES,
    ConvergenceReport,
    ReportRow,
    RunConfig,
    RunResult,
    check_energy_monotone,
    compute_rates,
    convergence_study,
    dense_oracle,
    error_norm,
    make_initial,
    read_snapshot,
    run_simulation,
    write_report_csv,
    write_snapshot,
    write_trace_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AuxiliaryDegeneracyError",
    "ConfigurationError",
    "GradflowError",
    "NonFiniteError",
    "RadicandNegativeError",
    "SolverDivergenceError",
    "SymbolSignError",
    "UsageError",
    "Grid2D",
    "OperatorSymbol",
    "ScalarField2D",
    "apply_operator",
    "dealias_pass",
    "forward",
    "inverse",
    "inner_product",
    "integrate",
    "l2_norm",
    "make_grid",
    "reset_solve_count",
    "solve_count",
    "solve_implicit",
    "MODEL_NAMES",
    "EnergyRecord",
    "ModelSpec",
    "PotentialSpec",
    "chemical_potential",
    "energy",
    "make_model",
    "nonlinear_energy",
    "SCHEME_KINDS",
    "FieldQ",
    "ScalarEta",
    "ScalarR",
    "SchemeConfig",
    "StepState",
    "aux_scalar",
    "init_state",
    "modified_energy",
    "resolve_c",
    "startup_half_step",
    "step",
    "step_3sieq",
    "step_3ssav",
    "step_3ssav_sqrt",
    "step_ieq",
    "step_sav",
    "PRESET_NAMES",
    "ConvergenceReport",
    "ReportRow",
    "RunConfig",
    "RunResult",
    "check_energy_monotone",
    "compute_rates",
    "convergence_study",
    "dense_oracle",
    "error_norm",
    "make_initial",
    "read_snapshot",
    "run_simulation",
    "write_report_csv",
    "write_snapshot",
    "write_trace_csv",
    "__version__",
]
