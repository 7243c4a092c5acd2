"""Diagnostics for expanding interval iterated function systems."""

__version__ = "0.1.0"

from .ifs import (
    Branch,
    ConfigurationError,
    EncodeResult,
    IFSystem,
    OutsideHullError,
    ProbVector,
    ValidationReport,
    affine_system,
    attractor_hull,
    compactified_distance,
    compactify,
    cylinder,
    distortion_constant,
    encode,
    ergodic_sums,
    pi_approx,
    system_from_json,
    system_to_json,
    validate,
    validated,
)
from .transition import (
    ConvergenceDiagnostics,
    GapProbeReport,
    GridFunction,
    apply_transition,
    cdf_grid,
    cdf_values,
    eval_cdf,
    gap_probe,
    holder_seminorm,
    iterate_transition,
    seminorm_refinement_sweep,
    uniform_grid,
)
from .takagi import (
    Cocycle,
    DerivativeGrid,
    IncrementVector,
    cocycle_matrix,
    cylinder_increment,
    derivative_grids,
    eval_derivative_grid,
    eval_derivative_point,
    fd_derivative,
    growth_constant,
    index_set,
    step_matrix,
)
from .thermo import (
    Endpoints,
    PressureCurve,
    SpectrumPoint,
    alpha_endpoints,
    gibbs_weights,
    pressure,
    solve_pressure_root,
    spectrum,
    spectrum_point,
)
from .exponents import (
    EmpiricalExponent,
    ExponentTrace,
    TypicalSamples,
    dyn_exponent,
    emp_exponent,
    sample_typical,
    spectrum_experiment,
)
from .conjugacy import (
    RigidityReport,
    conjugacy_residual,
    linear_model,
    phi,
    rigidity_report,
)
