"""Radial grids, stability bounds and grading-strata insertion.

Each stratum gets its own uniform grid of spherical cells. Cell j of a
stratum spanning [R_in, R_out] is the shell between faces
``R_in + j*dr`` and ``R_in + (j+1)*dr``; the outermost face is pinned to
``R_out`` exactly so that face radii shared by neighbouring strata are
bit-identical and cell volumes telescope to the exact shell volume.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    Capsule,
    CapsuleSpec,
    CapsuleValidationError,
    CflError,
    StratumSpec,
    validate_capsule,
)

FOUR_PI = 4.0 * math.pi

#: Safety factor applied when clamping a time step onto the CFL bound.
CFL_CLAMP_FACTOR = 0.9


@dataclass(frozen=True)
class StratumGrid:
    """Geometry arrays for one stratum."""

    index: int
    n: int
    dr: float
    dt: float
    r_inner: float
    r_outer: float
    centers: np.ndarray   # (n,) cell centre radii
    faces: np.ndarray     # (n+1,) face radii, faces[0] == r_inner
    areas: np.ndarray     # (n+1,) sphere areas 4*pi*r^2 at the faces
    volumes: np.ndarray   # (n,) exact shell volumes


def build_grid(stratum: StratumSpec, r_inner: float, r_outer: float, index: int = 0) -> StratumGrid:
    """Build the cell geometry of one stratum.

    ``r_outer - r_inner`` must equal the stratum thickness (up to rounding
    of the radii prefix sums).
    """
    n = int(round(stratum.thickness / stratum.dr))
    if n < 1:
        raise ValueError(f"stratum {index}: no cells (thickness {stratum.thickness}, dr {stratum.dr})")
    faces = r_inner + stratum.dr * np.arange(n + 1, dtype=np.float64)
    faces[n] = r_outer
    centers = r_inner + stratum.dr * (np.arange(n, dtype=np.float64) + 0.5)
    areas = FOUR_PI * faces * faces
    volumes = (FOUR_PI / 3.0) * (faces[1:] ** 3 - faces[:-1] ** 3)
    return StratumGrid(
        index=index,
        n=n,
        dr=stratum.dr,
        dt=stratum.dt,
        r_inner=r_inner,
        r_outer=r_outer,
        centers=centers,
        faces=faces,
        areas=areas,
        volumes=volumes,
    )


def build_grids(capsule: Capsule) -> list[StratumGrid]:
    grids = []
    r_in = 0.0
    for i, s in enumerate(capsule.strata):
        r_out = capsule.radii[i]
        grids.append(build_grid(s, r_in, r_out, index=i))
        r_in = r_out
    return grids


def harmonic_mean(a: float, b: float) -> float:
    """Harmonic mean used for cross-stratum diffusivities.

    Equal inputs short-circuit so that splitting a stratum in two cannot
    perturb the interface coefficient by rounding; a zero on either side
    blocks the interface entirely.
    """
    if a == b:
        return a
    if a == 0.0 or b == 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


def stratum_d_max(capsule: Capsule, index: int) -> float:
    """Largest diffusivity this stratum's cells can see.

    Covers both transport directions and the harmonic-mean coefficients at
    the interfaces with each neighbour.
    """
    s = capsule.strata[index]
    candidates = [s.d_plus, s.d_minus]
    for j in (index - 1, index + 1):
        if 0 <= j < len(capsule.strata):
            o = capsule.strata[j]
            candidates.append(harmonic_mean(s.d_plus, o.d_plus))
            candidates.append(harmonic_mean(s.d_minus, o.d_minus))
    return max(candidates)


def cfl_max_dt(dr: float, d_max: float) -> float:
    """Stability bound dt <= dr^2 / (2 * d_max) for the explicit update.

    A zero ``d_max`` (no transport at all) returns +inf.
    """
    if d_max == 0.0:
        return math.inf
    return dr * dr / (2.0 * d_max)


def check_cfl(capsule: Capsule) -> None:
    """Raise :class:`CflError` listing every stratum whose dt is unstable."""
    errors = []
    for i, s in enumerate(capsule.strata):
        bound = cfl_max_dt(s.dr, stratum_d_max(capsule, i))
        if s.dt > bound * (1.0 + 1e-12):
            errors.append(
                f"{s.name(i)}: dt={s.dt:g} exceeds the stability bound "
                f"{bound:g} = dr^2/(2*D_max); refine dt or pass the clamp option"
            )
    if errors:
        raise CflError(errors)


def clamp_cfl(capsule: Capsule) -> Capsule:
    """Clamp unstable time steps onto CFL_CLAMP_FACTOR times the bound.

    The clamped set is renormalized so that every dt remains an integer
    multiple of the new smallest dt: each target is first limited to the
    safety bound, then snapped down to a multiple of the smallest target.
    Returns a re-validated capsule (unchanged object if nothing clamps).
    """
    targets = []
    clamped_any = False
    for i, s in enumerate(capsule.strata):
        bound = cfl_max_dt(s.dr, stratum_d_max(capsule, i))
        limit = CFL_CLAMP_FACTOR * bound
        if s.dt > limit:
            targets.append(limit)
            clamped_any = True
        else:
            targets.append(s.dt)
    if not clamped_any:
        return capsule
    dt_min = min(targets)
    new_strata = []
    for s, target in zip(capsule.strata, targets):
        k = max(1, math.floor(target / dt_min * (1.0 + 1e-12)))
        new_strata.append(StratumSpec(
            thickness=s.thickness, d_plus=s.d_plus, dr=s.dr, dt=k * dt_min,
            alpha=s.alpha, beta=s.beta, c_init=s.c_init,
            fictitious=s.fictitious, label=s.label,
        ))
    clamped = validate_capsule(CapsuleSpec(new_strata, capsule.lam))
    check_cfl(clamped)
    return clamped


def _bounded_factors(ratio: int, max_ratio: float) -> Optional[list[int]]:
    """Split an integer dr ratio into factors, each <= max_ratio.

    Peels the largest admissible divisor first. Returns None when the
    remaining ratio has no divisor in [2, max_ratio].
    """
    cap = int(math.floor(max_ratio + 1e-12))
    factors: list[int] = []
    remaining = ratio
    while remaining > max_ratio * (1.0 + 1e-12):
        best = 0
        for d in range(cap, 1, -1):
            if remaining % d == 0:
                best = d
                break
        if best == 0:
            return None
        factors.append(best)
        remaining //= best
    return factors


def _divisors_ascending(m: int) -> list[int]:
    out = [d for d in range(1, m + 1) if m % d == 0]
    return out


def insert_fictitious_strata(capsule: Capsule, max_ratio: float) -> Capsule:
    """Grade steep dr jumps by inserting fictitious strata.

    Wherever the dr ratio across an internal interface exceeds
    ``max_ratio``, a geometric chain of strata is carved out of the coarse
    neighbour. Inserted strata inherit the coarse material, keep at least
    four cells each, and get the largest time step that divides the parent
    dt while satisfying the clamped CFL bound. Total thickness and initial
    mass are preserved exactly (the carved region keeps its c_init).
    Returns a re-validated capsule; no-op when every jump is within bounds.
    """
    if max_ratio < 1.0:
        raise ValueError("max_ratio must be >= 1")
    strata = list(capsule.strata)
    radii = list(capsule.radii)

    i = 0
    while i < len(strata) - 1:
        a, b = strata[i], strata[i + 1]
        ratio = max(a.dr, b.dr) / min(a.dr, b.dr)
        if ratio <= max_ratio * (1.0 + 1e-12):
            i += 1
            continue
        if max_ratio < 2.0:
            raise CapsuleValidationError([
                f"interface {i + 1}/{i + 2}: cannot grade a dr jump of {ratio:g} "
                f"with fictitious_max_ratio {max_ratio:g} < 2"
            ])
        coarse_is_inner = a.dr > b.dr
        coarse = a if coarse_is_inner else b
        fine = b if coarse_is_inner else a
        int_ratio = round(coarse.dr / fine.dr)
        factors = _bounded_factors(int_ratio, max_ratio)
        if factors is None:
            raise CapsuleValidationError([
                f"interface {i + 1}/{i + 2}: dr ratio {int_ratio} has no integer "
                f"grading with steps <= {max_ratio:g}; adjust dr or max_ratio"
            ])
        # Chain of inserted dr values, coarse side first.
        inserted: list[StratumSpec] = []
        dr_val = coarse.dr
        carve_cells_total = 0
        for f in factors:
            dr_val = dr_val / f
            own_ratio = round(coarse.dr / dr_val)
            # Whole coarse cells, at least 4 cells of the inserted grid.
            c_cells = max(1, math.ceil(4 / own_ratio))
            carve_cells_total += c_cells
            thickness = c_cells * coarse.dr
            inserted.append(StratumSpec(
                thickness=thickness,
                d_plus=coarse.d_plus,
                dr=dr_val,
                dt=coarse.dt,  # provisional; fixed below once D_max is known
                alpha=coarse.alpha,
                beta=coarse.beta,
                c_init=coarse.c_init,
                fictitious=True,
                label=(coarse.label + f"-grade{len(inserted) + 1}") if coarse.label else "",
            ))
        coarse_cells = round(coarse.thickness / coarse.dr)
        if carve_cells_total >= coarse_cells:
            raise CapsuleValidationError([
                f"interface {i + 1}/{i + 2}: grading needs {carve_cells_total} cells of "
                f"{coarse.name(i if coarse_is_inner else i + 1)} but only {coarse_cells} exist"
            ])
        shrunk = StratumSpec(
            thickness=coarse.thickness - carve_cells_total * coarse.dr,
            d_plus=coarse.d_plus, dr=coarse.dr, dt=coarse.dt,
            alpha=coarse.alpha, beta=coarse.beta, c_init=coarse.c_init,
            fictitious=coarse.fictitious, label=coarse.label,
        )
        if coarse_is_inner:
            block = [shrunk] + inserted
            strata[i:i + 1] = block
        else:
            block = list(reversed(inserted)) + [shrunk]
            strata[i + 1:i + 2] = block
        # Re-scan from the start of the modified region; new interfaces are
        # within bounds by construction but the far side may still need work.
        i += 1

    graded = validate_capsule(CapsuleSpec(strata, capsule.lam), max_dr_ratio=None)
    if graded.strata == capsule.strata:
        return capsule

    # Assign inserted time steps: largest divisor of the parent dt that
    # satisfies the clamped CFL bound and keeps the global multiple
    # structure intact.
    dt_min = graded.dt_min
    final = list(graded.strata)
    for idx, s in enumerate(final):
        if s in capsule.strata:
            continue
        if not s.fictitious:
            continue
        bound = CFL_CLAMP_FACTOR * cfl_max_dt(s.dr, stratum_d_max(graded, idx))
        if s.dt <= bound:
            continue
        m = round(s.dt / dt_min)
        chosen = None
        for d in _divisors_ascending(m):
            if s.dt / d <= bound:
                chosen = s.dt / d
                break
        if chosen is None:
            raise CflError([
                f"{s.name(idx)}: no divisor of dt={s.dt:g} satisfies the stability "
                f"bound {bound:g}; refine the capsule's smallest dt"
            ])
        final[idx] = StratumSpec(
            thickness=s.thickness, d_plus=s.d_plus, dr=s.dr, dt=chosen,
            alpha=s.alpha, beta=s.beta, c_init=s.c_init,
            fictitious=True, label=s.label,
        )
    result = validate_capsule(CapsuleSpec(final, capsule.lam))

    # Parent bookkeeping must follow the original physical strata, which
    # validate_capsule already reconstructs from the fictitious flags.
    assert abs(result.outer_radius - capsule.outer_radius) <= 1e-9 * capsule.outer_radius
    return result
