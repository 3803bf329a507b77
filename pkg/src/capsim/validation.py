"""Grid-convergence validation against the analytic sphere solution.

Six canonical discretizations of the same homogeneous test sphere
(R = 100 um, D = 0.5 um^2/s, c0 = 1 ug/um^3, lam = 1, no decay, no
erosion, T = 14400 s) are integrated and compared against a reference
release curve sampled once per minute. The default reference is the
closed-form series; a brute-force reference grid (dr = 0.01, dt = 1e-5)
is available for cross-checking but takes hours, so it hides behind an
explicit option.

The error metric is the mean (and max) relative deviation of released
mass, taken over samples where the reference has released at least 1% of
the initial mass, in percent.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .model import CapsuleSpec, SimulationConfig, StratumSpec
from .oracle import OracleSpec, analytic_release
from .simulate import SimulationResult, simulate

TEST_SPHERE = {
    "radius": 100.0,
    "diffusivity": 0.5,
    "c_init": 1.0,
    "lam": 1.0,
    "t_end": 14400.0,
    "output_every": 60.0,
}

#: Reference grid resolution used when comparing against a brute-force run
#: instead of the series (slow; minutes of model time per wall-clock hour).
BRUTE_REFERENCE_GRID = (0.01, 1e-5)


def _sphere_stratum(thickness: float, dr: float, dt: float) -> StratumSpec:
    return StratumSpec(
        thickness=thickness,
        d_plus=TEST_SPHERE["diffusivity"],
        dr=dr,
        dt=dt,
        alpha=1.0,
        beta=0.0,
        c_init=TEST_SPHERE["c_init"],
    )


def sphere_capsule(
    strata_dr: Sequence[float],
    strata_dt: Sequence[float],
    strata_thickness: Optional[Sequence[float]] = None,
) -> CapsuleSpec:
    """The validation sphere carved into strata with given grids."""
    n = len(strata_dr)
    if strata_thickness is None:
        strata_thickness = [TEST_SPHERE["radius"] / n] * n
    strata = [
        _sphere_stratum(th, dr, dt)
        for th, dr, dt in zip(strata_thickness, strata_dr, strata_dt)
    ]
    return CapsuleSpec(strata, TEST_SPHERE["lam"])


@dataclass(frozen=True)
class ValidationCase:
    name: str
    capsule: CapsuleSpec


def validation_cases() -> list[ValidationCase]:
    """The six canonical discretizations, inner stratum first."""
    var_dt = [1e-3 * f for f in (1.0, 0.5, 0.1, 0.05, 0.1, 0.5, 1.0, 0.05, 0.05, 1.0)]
    return [
        ValidationCase("one-stratum, fine grid", sphere_capsule([0.1], [1e-3])),
        ValidationCase("one-stratum, coarse grid", sphere_capsule([1.0], [0.1])),
        ValidationCase(
            "10-strata, constant coarse grid",
            sphere_capsule([1.0] * 10, [0.1] * 10),
        ),
        ValidationCase(
            "10-strata, variable-time fine grid",
            sphere_capsule([0.1] * 10, var_dt),
        ),
        ValidationCase(
            "2-strata, coarse-fine coupled grid",
            sphere_capsule([1.0, 0.1], [0.1, 1e-3], [75.0, 25.0]),
        ),
        ValidationCase(
            "2-strata, fine-coarse coupled grid",
            sphere_capsule([0.1, 1.0], [1e-3, 0.1], [75.0, 25.0]),
        ),
    ]


@dataclass(frozen=True)
class ValidationRow:
    config: str
    mean_rel_err_pct: float
    max_rel_err_pct: float
    runtime_s: float


@dataclass
class ValidationReport:
    rows: list[ValidationRow]
    times: np.ndarray
    reference_mass: np.ndarray
    reference_kind: str
    curves: dict[str, SimulationResult] = field(default_factory=dict)

    def by_name(self, name: str) -> ValidationRow:
        for row in self.rows:
            if row.config == name:
                return row
        raise KeyError(name)

    def text_table(self) -> str:
        name_w = max(len("config"), max(len(r.config) for r in self.rows))
        lines = [
            f"{'config':<{name_w}}  {'mean err %':>10}  {'max err %':>10}  {'runtime s':>10}",
            f"{'-' * name_w}  {'-' * 10}  {'-' * 10}  {'-' * 10}",
        ]
        for r in self.rows:
            lines.append(
                f"{r.config:<{name_w}}  {r.mean_rel_err_pct:>10.4f}  "
                f"{r.max_rel_err_pct:>10.4f}  {r.runtime_s:>10.2f}"
            )
        lines.append(f"reference: {self.reference_kind}")
        return "\n".join(lines)


def reference_oracle() -> OracleSpec:
    return OracleSpec(
        radius=TEST_SPHERE["radius"],
        diffusivity=TEST_SPHERE["diffusivity"],
        lam=TEST_SPHERE["lam"],
        c_init=TEST_SPHERE["c_init"],
        n_terms=256,
    )


def _run_case(capsule: CapsuleSpec, scheme: str, t_end: float,
              output_every: float, use_direction: bool = True) -> SimulationResult:
    config = SimulationConfig(
        capsule=capsule, t_end=t_end, output_every=output_every, scheme=scheme,
    )
    return simulate(config, use_direction=use_direction)


def relative_errors(sim_mass: np.ndarray, ref_mass: np.ndarray,
                    ref_fraction: np.ndarray, min_fraction: float = 0.01
                    ) -> np.ndarray:
    """Pointwise relative errors over the trusted part of the curve."""
    mask = ref_fraction >= min_fraction
    if not np.any(mask):
        raise ValueError("reference never reaches the minimum fraction")
    return np.abs(sim_mass[mask] - ref_mass[mask]) / ref_mass[mask]


def run_validation_suite(
    reference: str = "oracle",
    scheme: str = "conservative",
    t_end: Optional[float] = None,
    output_every: Optional[float] = None,
    cases: Optional[list[ValidationCase]] = None,
    min_fraction: float = 0.01,
    brute_grid: tuple[float, float] = BRUTE_REFERENCE_GRID,
    progress: Optional[Callable[[str], None]] = None,
) -> ValidationReport:
    """Run every case and tabulate errors against the chosen reference.

    ``reference`` is "oracle" (series solution) or "brute" (reference
    grid, very slow at the default resolution).
    """
    t_end = TEST_SPHERE["t_end"] if t_end is None else t_end
    output_every = TEST_SPHERE["output_every"] if output_every is None else output_every
    cases = validation_cases() if cases is None else cases

    n_samples = int(round(t_end / output_every)) + 1
    times = output_every * np.arange(n_samples)

    if reference == "oracle":
        spec = reference_oracle()
        ref_fraction = np.asarray(analytic_release(spec, times))
        ref_mass = spec.initial_mass * ref_fraction
        ref_kind = "analytic series"
    elif reference == "brute":
        dr, dt = brute_grid
        if progress:
            progress(f"running brute-force reference grid dr={dr:g}, dt={dt:g}")
        ref_res = _run_case(sphere_capsule([dr], [dt]), scheme, t_end, output_every)
        ref_mass = ref_res.record.totals()
        ref_fraction = ref_res.record.fractions()
        ref_kind = f"reference grid dr={dr:g}, dt={dt:g}"
    else:
        raise ValueError(f"unknown reference {reference!r}")

    rows: list[ValidationRow] = []
    curves: dict[str, SimulationResult] = {}
    for case in cases:
        if progress:
            progress(f"running {case.name}")
        t0 = time.perf_counter()
        result = _run_case(case.capsule, scheme, t_end, output_every)
        runtime = time.perf_counter() - t0
        sim_mass = result.record.totals()
        if sim_mass.shape != ref_mass.shape:
            raise RuntimeError(
                f"{case.name}: sample count {sim_mass.size} does not match "
                f"reference {ref_mass.size}"
            )
        errs = relative_errors(sim_mass, ref_mass, ref_fraction, min_fraction)
        rows.append(ValidationRow(
            config=case.name,
            mean_rel_err_pct=100.0 * float(errs.mean()),
            max_rel_err_pct=100.0 * float(errs.max()),
            runtime_s=runtime,
        ))
        curves[case.name] = result
    return ValidationReport(
        rows=rows,
        times=times,
        reference_mass=ref_mass,
        reference_kind=ref_kind,
        curves=curves,
    )
