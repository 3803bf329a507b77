"""Finite-volume release simulation for multi-stratum spherical microcapsules.

The model is a 1-d radial diffusion equation over concentric strata, each
with its own grid, diffusivity pair (outward/inward), linear retention,
and initial load; the outer boundary is partially permeable and may erode
inward on a prescribed schedule. See the README for the full tour.
"""
from .calibration import (
    FitProblem,
    FitResult,
    FreeParameter,
    SweepSeries,
    fit,
    sweep_parameter,
)
from .config import (
    ConfigError,
    FitSettings,
    ParsedConfig,
    emit_config,
    load_config,
    parse_config,
    parse_document,
)
from .erosion import (
    ErosionSchedule,
    load_erosion_csv,
    radius_at,
    schedule_from_phases,
)
from .grid import cfl_max_dt, check_cfl, clamp_cfl, insert_fictitious_strata
from .model import (
    Capsule,
    CapsuleSpec,
    CapsuleValidationError,
    CflError,
    SimulationConfig,
    StratumSpec,
    validate_capsule,
)
from .oracle import (
    OracleSpec,
    analytic_release,
    analytic_release_mass,
    robin_sphere_eigenvalues,
    truncation_bound,
)
from .release import ReleaseRecord, ReleaseSample, mass_audit
from .simulate import (
    Simulation,
    SimulationFault,
    SimulationResult,
    prepare_capsule,
    simulate,
)
from .validation import ValidationReport, run_validation_suite, validation_cases

__version__ = "0.1.0"

__all__ = [
    "Capsule",
    "CapsuleSpec",
    "CapsuleValidationError",
    "CflError",
    "ConfigError",
    "ErosionSchedule",
    "FitProblem",
    "FitResult",
    "FitSettings",
    "FreeParameter",
    "OracleSpec",
    "ParsedConfig",
    "ReleaseRecord",
    "ReleaseSample",
    "Simulation",
    "SimulationConfig",
    "SimulationFault",
    "SimulationResult",
    "StratumSpec",
    "SweepSeries",
    "ValidationReport",
    "analytic_release",
    "analytic_release_mass",
    "cfl_max_dt",
    "check_cfl",
    "clamp_cfl",
    "emit_config",
    "fit",
    "insert_fictitious_strata",
    "load_config",
    "load_erosion_csv",
    "mass_audit",
    "parse_config",
    "parse_document",
    "prepare_capsule",
    "radius_at",
    "robin_sphere_eigenvalues",
    "run_validation_suite",
    "schedule_from_phases",
    "simulate",
    "sweep_parameter",
    "truncation_bound",
    "validate_capsule",
    "validation_cases",
    "__version__",
]
