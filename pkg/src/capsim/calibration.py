"""Least-squares calibration of capsule parameters to a release curve.

A :class:`FitProblem` names the free parameters by path ("lambda",
"strata[3].d_plus", "strata[4-9].alpha" for a shared value across a
range), carries box bounds per parameter, and measures the misfit
between the simulated release curve and target masses at given times.
Optimization runs scipy's Nelder-Mead on a transformed (log or linear)
parameter vector, with out-of-bounds points penalized so the simplex
stays inside the box.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .model import CapsuleSpec, CapsuleValidationError, SimulationConfig
from .simulate import SimulationFault, simulate

_PATH_RE = re.compile(r"^strata\[(\d+)(?:-(\d+))?\]\.(\w+)$")

#: Stratum fields that may be calibrated.
TUNABLE_FIELDS = ("d_plus", "alpha", "beta", "c_init")


@dataclass(frozen=True)
class FreeParameter:
    """One fit degree of freedom.

    ``path`` addresses either the boundary transfer coefficient
    ("lambda") or a stratum field ("strata[2].d_plus"); stratum indices
    are 1-based and may span an inclusive range ("strata[3-8].c_init"),
    in which case every stratum in the range shares one fitted value.
    ``log`` switches the optimizer to work on log10 of the value, which
    suits diffusivities and transfer coefficients that range over
    decades. Bounds are inclusive and required.
    """

    path: str
    lower: float
    upper: float
    log: bool = False

    def __post_init__(self):
        if not (self.lower < self.upper):
            raise ValueError(f"{self.path}: bounds must satisfy lower < upper")
        if self.log and self.lower <= 0:
            raise ValueError(f"{self.path}: log scaling needs positive bounds")
        self._parse()

    def _parse(self) -> tuple[Optional[tuple[int, int]], str]:
        if self.path == "lambda":
            return None, "lambda"
        m = _PATH_RE.match(self.path)
        if not m:
            raise ValueError(
                f"bad parameter path {self.path!r}; expected 'lambda' or "
                f"'strata[i].field' or 'strata[i-j].field'"
            )
        first = int(m.group(1))
        last = int(m.group(2)) if m.group(2) else first
        fld = m.group(3)
        if first < 1 or last < first:
            raise ValueError(f"{self.path}: bad stratum range")
        if fld not in TUNABLE_FIELDS:
            raise ValueError(
                f"{self.path}: field {fld!r} is not tunable "
                f"(choose from {', '.join(TUNABLE_FIELDS)})"
            )
        return (first - 1, last - 1), fld

    def apply(self, spec: CapsuleSpec, value: float) -> CapsuleSpec:
        span, fld = self._parse()
        if span is None:
            return CapsuleSpec(spec.strata, value)
        first, last = span
        if last >= len(spec.strata):
            raise ValueError(
                f"{self.path}: capsule has only {len(spec.strata)} strata"
            )
        strata = list(spec.strata)
        for i in range(first, last + 1):
            strata[i] = replace(strata[i], **{fld: value})
        return CapsuleSpec(strata, spec.lam)

    def current(self, spec: CapsuleSpec) -> float:
        """The value the path addresses right now (first stratum of a range)."""
        span, fld = self._parse()
        if span is None:
            return spec.lam
        first, last = span
        if last >= len(spec.strata):
            raise ValueError(
                f"{self.path}: capsule has only {len(spec.strata)} strata"
            )
        return float(getattr(spec.strata[first], fld))

    def scale(self, spec: CapsuleSpec, factor: float) -> CapsuleSpec:
        """Multiply the addressed value(s) in place of setting them.

        Unlike :meth:`apply`, strata in a range keep their individual
        values, each scaled by ``factor``.
        """
        span, fld = self._parse()
        if span is None:
            return CapsuleSpec(spec.strata, spec.lam * factor)
        first, last = span
        if last >= len(spec.strata):
            raise ValueError(
                f"{self.path}: capsule has only {len(spec.strata)} strata"
            )
        strata = list(spec.strata)
        for i in range(first, last + 1):
            cur = getattr(strata[i], fld)
            strata[i] = replace(strata[i], **{fld: cur * factor})
        return CapsuleSpec(strata, spec.lam)

    def encode(self, value: float) -> float:
        return math.log10(value) if self.log else value

    def decode(self, x: float) -> float:
        return 10.0 ** x if self.log else x

    def clip(self, value: float) -> float:
        return min(max(value, self.lower), self.upper)


@dataclass(frozen=True)
class FitProblem:
    """Calibration target: which knobs to turn and what to hit.

    ``target_times``/``target_masses`` give the measured cumulative
    release (mass units) at simulation times in seconds. ``mode``
    selects the residual: "absolute" uses mass differences, "relative"
    divides each residual by the target (samples with zero target are
    skipped in relative mode).
    """

    base: SimulationConfig
    parameters: tuple[FreeParameter, ...]
    target_times: np.ndarray
    target_masses: np.ndarray
    mode: str = "absolute"

    def __init__(self, base, parameters, target_times, target_masses,
                 mode="absolute"):
        times = np.asarray(target_times, dtype=np.float64)
        masses = np.asarray(target_masses, dtype=np.float64)
        if times.ndim != 1 or times.shape != masses.shape:
            raise ValueError("target times and masses must be 1-d and equal length")
        if times.size == 0:
            raise ValueError("no data: empty calibration target")
        if np.any(np.diff(times) <= 0):
            raise ValueError("target times must be strictly increasing")
        if times[0] < 0:
            raise ValueError("target times must be nonnegative")
        if mode not in ("absolute", "relative"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "relative" and not np.any(masses != 0):
            raise ValueError("relative mode needs at least one nonzero target")
        params = tuple(parameters)
        seen = set()
        for p in params:
            if not (math.isfinite(p.lower) and math.isfinite(p.upper)):
                raise ValueError(f"{p.path}: fit bounds must be finite")
            if p.path in seen:
                raise ValueError(f"duplicate parameter path {p.path!r}")
            seen.add(p.path)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "parameters", params)
        object.__setattr__(self, "target_times", times)
        object.__setattr__(self, "target_masses", masses)
        object.__setattr__(self, "mode", mode)

    def build_config(self, values: Sequence[float]) -> SimulationConfig:
        spec = self.base.capsule
        for p, v in zip(self.parameters, values):
            spec = p.apply(spec, v)
        return self.base.with_capsule(spec)

    def simulated_masses(self, values: Sequence[float]) -> np.ndarray:
        config = self.build_config(values)
        result = simulate(config, clamp_cfl=True)
        rec = result.record
        sim_t = rec.times()
        sim_m = rec.totals()
        if self.target_times[-1] > sim_t[-1] + 1e-9 * max(1.0, sim_t[-1]):
            raise ValueError(
                f"targets extend to t={self.target_times[-1]:g} s but the "
                f"simulation ends at t={sim_t[-1]:g} s"
            )
        return np.interp(self.target_times, sim_t, sim_m)

    def objective(self, values: Sequence[float]) -> float:
        """Root-mean-square misfit for one parameter vector."""
        try:
            sim = self.simulated_masses(values)
        except (CapsuleValidationError, SimulationFault, ValueError):
            return math.inf
        res = sim - self.target_masses
        if self.mode == "relative":
            keep = self.target_masses != 0
            res = res[keep] / self.target_masses[keep]
        return float(np.sqrt(np.mean(res * res)))


@dataclass
class FitResult:
    values: dict[str, float]
    objective: float
    n_evaluations: int
    converged: bool
    budget_exhausted: bool
    trace: list[tuple[list[float], float]] = field(default_factory=list)
    message: str = ""

    def summary(self) -> str:
        lines = [f"objective (rms misfit): {self.objective:.6g}"]
        for path, v in self.values.items():
            lines.append(f"  {path} = {v:.6g}")
        status = "converged" if self.converged else (
            "stopped: evaluation budget exhausted" if self.budget_exhausted
            else f"stopped: {self.message}")
        lines.append(status)
        lines.append(f"simulations run: {self.n_evaluations}")
        return "\n".join(lines)


def fit(problem: FitProblem, initial: Sequence[float],
        max_evaluations: int = 200, xatol: float = 1e-4,
        fatol: float = 1e-8, keep_trace: bool = True,
        seed: Optional[int] = None) -> FitResult:
    """Calibrate the free parameters with bounded Nelder-Mead.

    ``initial`` gives a starting value per parameter (in natural units,
    not log space). Values are clipped to bounds before use. ``seed``
    perturbs the initial simplex edge lengths reproducibly; the default
    uses fixed 5%-of-box edges. Returns the best point seen, which for a
    penalized simplex search is the right thing to report even when
    scipy stops on the iteration budget.
    """
    params = problem.parameters
    if len(initial) != len(params):
        raise ValueError(
            f"expected {len(params)} initial values, got {len(initial)}"
        )
    if not params:
        loss = problem.objective([])
        return FitResult(
            values={}, objective=loss, n_evaluations=1, converged=True,
            budget_exhausted=False, trace=[([], loss)],
            message="no free parameters",
        )
    if max_evaluations < len(params) + 1:
        raise ValueError(
            f"budget {max_evaluations} is below the simplex size "
            f"{len(params) + 1}"
        )
    x0 = np.array([
        p.encode(p.clip(float(v))) for p, v in zip(params, initial)
    ])
    lo = np.array([p.encode(p.lower) for p in params])
    hi = np.array([p.encode(p.upper) for p in params])

    trace: list[tuple[list[float], float]] = []
    best = {"x": None, "f": math.inf, "n": 0}

    def penalized(x: np.ndarray) -> float:
        best["n"] += 1
        # Keep the simplex honest: outside the box the objective is the
        # best known value plus a growing penalty, so reflections fold
        # back inside without ever simulating unphysical parameters.
        overshoot = np.sum(np.maximum(x - hi, 0.0) + np.maximum(lo - x, 0.0))
        if overshoot > 0:
            base_f = best["f"] if math.isfinite(best["f"]) else 1.0
            return abs(base_f) + (1.0 + overshoot) * 1e3
        values = [p.decode(xi) for p, xi in zip(params, x)]
        f = problem.objective(values)
        if keep_trace:
            trace.append((values, f))
        if f < best["f"]:
            best["f"] = f
            best["x"] = np.array(x)
        return f

    span = hi - lo
    if seed is None:
        edges = np.full(len(params), 0.05)
    else:
        rng = np.random.default_rng(seed)
        edges = rng.uniform(0.03, 0.08, size=len(params))
    sim0 = np.tile(x0, (len(params) + 1, 1))
    for i in range(len(params)):
        step = edges[i] * span[i]
        if x0[i] + step > hi[i]:
            step = -step
        sim0[i + 1, i] += step

    res = minimize(
        penalized, x0, method="Nelder-Mead",
        options={
            "maxfev": max_evaluations,
            "xatol": xatol,
            "fatol": fatol,
            "initial_simplex": sim0,
            "adaptive": len(params) > 2,
        },
    )

    if best["x"] is None:
        raise RuntimeError("calibration never produced a finite objective")
    values = {
        p.path: p.clip(p.decode(xi)) for p, xi in zip(params, best["x"])
    }
    budget = best["n"] >= max_evaluations and not res.success
    return FitResult(
        values=values,
        objective=best["f"],
        n_evaluations=best["n"],
        converged=bool(res.success),
        budget_exhausted=budget,
        trace=trace,
        message=str(res.message),
    )


@dataclass(frozen=True)
class SweepSeries:
    parameter: str
    value: float
    times: np.ndarray
    masses: np.ndarray
    fractions: np.ndarray
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)


def sweep_parameter(base: SimulationConfig, path: str,
                    values: Sequence[float], multipliers: bool = False,
                    clamp_cfl: bool = True) -> list[SweepSeries]:
    """Release curves for a one-at-a-time parameter scan.

    ``path`` follows the :class:`FreeParameter` syntax. With
    ``multipliers`` the values scale the reference setting instead of
    replacing it (per stratum when the path spans several). A value of
    ``inf`` for "lambda" is mapped to the largest transfer coefficient
    the outer grid spacing supports (1/dr of the outermost stratum),
    the discrete stand-in for a perfectly absorbing boundary. A member
    that fails to run is reported with its error and the scan goes on.
    """
    probe = FreeParameter(path=path, lower=0.0, upper=math.inf)
    series: list[SweepSeries] = []
    empty = np.empty(0)
    for v in values:
        v = float(v)
        if multipliers:
            if math.isinf(v):
                raise ValueError(f"{path}: infinite multiplier")
            spec = probe.scale(base.capsule, v)
        else:
            if math.isinf(v):
                if path != "lambda":
                    raise ValueError(
                        f"{path}: only lambda supports an infinite value"
                    )
                v = 1.0 / base.capsule.strata[-1].dr
            spec = probe.apply(base.capsule, v)
        try:
            result = simulate(base.with_capsule(spec), clamp_cfl=clamp_cfl)
        except (CapsuleValidationError, SimulationFault, ValueError) as exc:
            series.append(SweepSeries(
                parameter=path, value=v, times=empty, masses=empty,
                fractions=empty, error=str(exc),
            ))
            continue
        rec = result.record
        series.append(SweepSeries(
            parameter=path,
            value=v,
            times=rec.times(),
            masses=rec.totals(),
            fractions=rec.fractions(),
        ))
    return series
