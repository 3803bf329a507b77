"""Capsule geometry and physical parameters.

A capsule is an ordered stack of spherical strata (core first, outermost
last). Each stratum carries its own diffusivity, anisotropy ratio, decay
rate, initial concentration and its own grid resolution in space and time.
Everything in this package uses a fixed unit system: micrometres for
length, seconds for time, micrograms for mass. Concentrations are
ug/um^3 and the boundary permeability ``lam`` is um/s.

``validate_capsule`` is the single entry point that turns raw user input
into a normalized, immutable :class:`Capsule`. It collects *all*
violations instead of stopping at the first one, so a config file with
three mistakes reports three messages.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Union

#: Relative tolerance used when snapping "should be an integer" ratios.
INT_REL_TOL = 1e-9


class CapsuleValidationError(ValueError):
    """Raised when a capsule description is inconsistent.

    The ``errors`` attribute holds every violation found, one message each.
    """

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class CflError(ValueError):
    """Raised when a configured time step exceeds the stability bound."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class StratumSpec:
    """One spherical shell (or the core ball) of the capsule.

    Parameters
    ----------
    thickness:
        Radial extent of the stratum [um]. For the innermost stratum this
        is the core radius.
    d_plus:
        Diffusivity seen by outward-decreasing concentration [um^2/s].
    alpha:
        Anisotropy ratio. The inward diffusivity is ``alpha * d_plus``.
    beta:
        First-order decay / irreversible binding rate [1/s].
    c_init:
        Initial concentration, uniform over the stratum [ug/um^3].
    dr:
        Cell size of this stratum's radial grid [um]. Must divide
        ``thickness`` evenly.
    dt:
        Time step used when this stratum updates [s]. Must be an integer
        multiple of the smallest dt in the capsule.
    fictitious:
        True for strata that exist only as a numerical partition of a
        physical neighbour (they inherit that neighbour's material).
    label:
        Optional display name used in error messages and reports.
    """

    thickness: float
    d_plus: float
    dr: float
    dt: float
    alpha: float = 1.0
    beta: float = 0.0
    c_init: float = 0.0
    fictitious: bool = False
    label: str = ""

    @property
    def d_minus(self) -> float:
        """Inward diffusivity, always derived as ``alpha * d_plus``."""
        return self.alpha * self.d_plus

    def name(self, index: int) -> str:
        return self.label if self.label else f"stratum {index + 1}"


@dataclass(frozen=True)
class CapsuleSpec:
    """Raw capsule description: ordered strata plus outer permeability."""

    strata: tuple[StratumSpec, ...]
    lam: float  # outer boundary mass-transfer coefficient [um/s]

    def __init__(self, strata: Iterable[StratumSpec], lam: float):
        object.__setattr__(self, "strata", tuple(strata))
        object.__setattr__(self, "lam", float(lam))


@dataclass(frozen=True)
class Capsule:
    """A validated capsule.

    Produced by :func:`validate_capsule`; carries the derived radii and the
    snapped integer structure (cells per stratum, dt multipliers) that the
    rest of the package relies on. ``parents`` maps every stratum to the
    physical stratum it belongs to, so numerical partitions stay traceable.
    """

    strata: tuple[StratumSpec, ...]
    lam: float
    radii: tuple[float, ...]          # outer radius of each stratum
    cells: tuple[int, ...]            # thickness / dr, snapped
    dt_min: float
    multipliers: tuple[int, ...]      # dt / dt_min, snapped
    parents: tuple[int, ...]          # physical stratum index per stratum

    @property
    def outer_radius(self) -> float:
        return self.radii[-1]

    @property
    def core_radius(self) -> float:
        """Outer radius of the physical core, including its numerical
        partitions. Surface erosion is clamped here."""
        last = 0
        for i, p in enumerate(self.parents):
            if p == 0:
                last = i
        return self.radii[last]

    @property
    def n_cells(self) -> int:
        return sum(self.cells)

    def spec(self) -> CapsuleSpec:
        return CapsuleSpec(self.strata, self.lam)


def derive_radii(strata: Sequence[StratumSpec]) -> tuple[float, ...]:
    """Prefix-sum stratum thicknesses into outer radii.

    Raises :class:`CapsuleValidationError` naming the offending stratum if
    any thickness is not strictly positive.
    """
    errors = []
    radii = []
    total = 0.0
    for i, s in enumerate(strata):
        if not (s.thickness > 0.0) or not math.isfinite(s.thickness):
            errors.append(f"{s.name(i)}: thickness must be positive, got {s.thickness}")
            continue
        total += s.thickness
        radii.append(total)
    if errors:
        raise CapsuleValidationError(errors)
    return tuple(radii)


def _near_int(x: float) -> Optional[int]:
    """Round ``x`` to an integer if it is one up to INT_REL_TOL, else None."""
    n = round(x)
    if n >= 1 and abs(x - n) <= INT_REL_TOL * max(1.0, abs(x)):
        return int(n)
    return None


def validate_capsule(
    capsule: Union[CapsuleSpec, Capsule],
    max_dr_ratio: Optional[float] = None,
) -> Capsule:
    """Check a capsule description and return its normalized form.

    All violations are collected and raised together. Validation is
    idempotent: feeding the returned :class:`Capsule` back in yields an
    equal object.

    ``max_dr_ratio`` optionally enforces a ceiling on the dr jump across
    internal interfaces. Leave it ``None`` when jumps of any (integer) size
    are acceptable or when grading strata will be inserted separately.
    """
    if isinstance(capsule, Capsule):
        spec = capsule.spec()
    else:
        spec = capsule
    errors: list[str] = []
    strata = spec.strata
    if len(strata) == 0:
        raise CapsuleValidationError(["capsule has no strata"])

    for i, s in enumerate(strata):
        nm = s.name(i)
        if not (s.thickness > 0.0) or not math.isfinite(s.thickness):
            errors.append(f"{nm}: thickness must be positive, got {s.thickness}")
        if s.d_plus < 0.0 or not math.isfinite(s.d_plus):
            errors.append(f"{nm}: d_plus must be non-negative, got {s.d_plus}")
        if s.alpha < 0.0 or not math.isfinite(s.alpha):
            errors.append(f"{nm}: alpha must be non-negative, got {s.alpha}")
        if s.beta < 0.0 or not math.isfinite(s.beta):
            errors.append(f"{nm}: beta must be non-negative, got {s.beta}")
        if s.c_init < 0.0 or not math.isfinite(s.c_init):
            errors.append(f"{nm}: c_init must be non-negative, got {s.c_init}")
        if not (s.dr > 0.0) or not math.isfinite(s.dr):
            errors.append(f"{nm}: dr must be positive, got {s.dr}")
        if not (s.dt > 0.0) or not math.isfinite(s.dt):
            errors.append(f"{nm}: dt must be positive, got {s.dt}")
    if strata[0].fictitious:
        errors.append("stratum 1: the innermost stratum cannot be fictitious")
    if spec.lam < 0.0 or not math.isfinite(spec.lam):
        errors.append(f"lambda must be non-negative and finite, got {spec.lam}")
    if errors:
        raise CapsuleValidationError(errors)

    # Geometry: dr must divide each thickness evenly.
    cells: list[int] = []
    for i, s in enumerate(strata):
        n = _near_int(s.thickness / s.dr)
        if n is None:
            errors.append(
                f"{s.name(i)}: dr={s.dr!r} does not divide thickness={s.thickness!r} evenly"
            )
            cells.append(0)
        else:
            cells.append(n)

    # Time structure: every dt an integer multiple of the smallest.
    dt_min = min(s.dt for s in strata)
    multipliers: list[int] = []
    for i, s in enumerate(strata):
        k = _near_int(s.dt / dt_min)
        if k is None:
            errors.append(
                f"{s.name(i)}: dt={s.dt!r} is not an integer multiple of the smallest dt={dt_min!r}"
            )
            multipliers.append(0)
        else:
            multipliers.append(k)

    # Interfaces: the larger dr must be an integer multiple of the smaller,
    # and optionally bounded by max_dr_ratio.
    for i in range(len(strata) - 1):
        a, b = strata[i].dr, strata[i + 1].dr
        hi, lo = (a, b) if a >= b else (b, a)
        ratio = hi / lo
        if _near_int(ratio) is None:
            errors.append(
                f"interface {i + 1}/{i + 2}: dr ratio {hi!r}:{lo!r} is not an integer"
            )
        elif max_dr_ratio is not None and ratio > max_dr_ratio * (1.0 + INT_REL_TOL):
            errors.append(
                f"interface {i + 1}/{i + 2}: dr ratio {ratio:g} exceeds the allowed "
                f"maximum {max_dr_ratio:g} and grading insertion is disabled"
            )

    # Numerical partitions carry no physics of their own.
    for i in range(1, len(strata)):
        s = strata[i]
        if not s.fictitious:
            continue
        prev = strata[i - 1]
        if (s.d_plus != prev.d_plus or s.alpha != prev.alpha
                or s.beta != prev.beta or s.c_init != prev.c_init):
            errors.append(
                f"{s.name(i)}: a numerical partition must share the physics "
                f"(d_plus, alpha, beta, c_init) of the stratum it partitions"
            )

    # Outer boundary: the discrete ghost value C_N * (1 - dr * lam) must
    # stay non-negative, otherwise the boundary is too permeable for the
    # outermost grid.
    if strata[-1].dr * spec.lam > 1.0 + INT_REL_TOL:
        errors.append(
            f"boundary too permeable: dr*lambda = {strata[-1].dr * spec.lam:g} > 1 "
            f"for the outermost stratum (refine dr or reduce lambda)"
        )

    if errors:
        raise CapsuleValidationError(errors)

    radii = derive_radii(strata)

    parents: list[int] = []
    group = -1
    for s in strata:
        if not s.fictitious:
            group += 1
        parents.append(group)

    return Capsule(
        strata=strata,
        lam=spec.lam,
        radii=radii,
        cells=tuple(cells),
        dt_min=dt_min,
        multipliers=tuple(multipliers),
        parents=tuple(parents),
    )


@dataclass(frozen=True)
class SimulationConfig:
    """Everything needed to run one release simulation.

    ``erosion`` is an optional :class:`capsim.erosion.ErosionSchedule`.
    ``scheme`` selects the flux divisor: "conservative" uses exact cell
    volumes so total mass telescopes to round-off, "paper" uses the
    dr * r_j^2 measure. ``fictitious_max_ratio`` turns on automatic
    insertion of grading strata whenever a dr jump exceeds it.
    ``profile_every`` > 0 additionally samples full concentration profiles.
    """

    capsule: CapsuleSpec
    t_end: float
    output_every: float
    erosion: Optional["ErosionSchedule"] = None  # noqa: F821
    scheme: str = "conservative"
    fictitious_max_ratio: Optional[float] = None
    profile_every: float = 0.0

    def __post_init__(self):
        if not (self.t_end > 0.0):
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if not (self.output_every > 0.0):
            raise ValueError(f"output_every must be positive, got {self.output_every}")
        if self.scheme not in ("conservative", "paper"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.fictitious_max_ratio is not None and self.fictitious_max_ratio < 1.0:
            raise ValueError("fictitious_max_ratio must be >= 1")
        if self.profile_every < 0.0:
            raise ValueError("profile_every must be >= 0")

    def with_capsule(self, capsule: CapsuleSpec) -> "SimulationConfig":
        return replace(self, capsule=capsule)
