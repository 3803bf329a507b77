"""Surface erosion schedules and whole-cell retirement.

The eroding surface radius R(t) is given either directly as (t, R)
samples or as piecewise-constant speed phases; both reduce to the same
piecewise-linear trace. Evaluation clamps at a floor radius (the physical
core cannot erode) and extrapolates the last value beyond the final knot.

Erosion acts on the grid by retiring whole cells: the outermost alive
cell is removed as soon as its *inner* face radius has been reached, and
its entire mass counts as released at that instant. Partial cells never
shrink, so the discrete surface lags R(t) by at most one cell.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class ErosionSchedule:
    """Piecewise-linear surface radius trace.

    ``times`` strictly increasing, starting at 0; ``radii`` non-increasing.
    ``source`` optionally records the file the schedule came from.
    """

    times: tuple[float, ...]
    radii: tuple[float, ...]
    source: str = field(default="", compare=False)

    def __post_init__(self):
        if len(self.times) != len(self.radii) or len(self.times) < 1:
            raise ValueError("erosion schedule needs matching, non-empty times and radii")
        if self.times[0] != 0.0:
            raise ValueError("erosion schedule must start at t = 0")
        for i in range(1, len(self.times)):
            if self.times[i] <= self.times[i - 1]:
                raise ValueError("erosion times must be strictly increasing")
            if self.radii[i] > self.radii[i - 1]:
                raise ValueError("erosion radii must be non-increasing")

    @property
    def initial_radius(self) -> float:
        return self.radii[0]

    def knots(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.asarray(self.times, dtype=np.float64),
                np.asarray(self.radii, dtype=np.float64))


def schedule_from_phases(
    r_start: float,
    phases: Sequence[tuple[float, float, float]],
    source: str = "",
) -> ErosionSchedule:
    """Build a schedule from (t_start, t_end, speed) phases.

    Phases must tile [0, T] without gaps or overlaps; speeds are um/s and
    must be non-negative. Gaps are not allowed; use a zero-speed phase.
    """
    times = [0.0]
    radii = [float(r_start)]
    t_prev = 0.0
    r = float(r_start)
    for t0, t1, v in phases:
        if not math.isclose(t0, t_prev, rel_tol=0.0, abs_tol=1e-9 * max(1.0, t_prev)):
            raise ValueError(f"erosion phases must be contiguous, got a gap at t={t0}")
        if t1 <= t0:
            raise ValueError("erosion phase must have t_end > t_start")
        if v < 0.0:
            raise ValueError("erosion speed must be non-negative")
        r = r - v * (t1 - t0)
        times.append(float(t1))
        radii.append(r)
        t_prev = t1
    return ErosionSchedule(tuple(times), tuple(radii), source=source)


def radius_at(schedule: ErosionSchedule, t: float, floor: float = 0.0) -> float:
    """Evaluate R(t) with the core-radius clamp.

    Constant extrapolation on both sides of the sampled range.
    """
    ts, rs = schedule.times, schedule.radii
    if t <= ts[0]:
        r = rs[0]
    elif t >= ts[-1]:
        r = rs[-1]
    else:
        r = float(np.interp(t, ts, rs))
    return max(r, floor)


def _read_csv_rows(text: str) -> tuple[list[str], list[list[float]]]:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.reader(io.StringIO("\n".join(lines)))
    rows = list(reader)
    if not rows:
        raise ValueError("empty CSV")
    header = [h.strip() for h in rows[0]]
    data = []
    for idx, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            data.append([float(x) for x in row])
        except ValueError as exc:
            raise ValueError(f"CSV row {idx}: {exc}") from None
    return header, data


def load_erosion_csv(path: Union[str, Path]) -> ErosionSchedule:
    """Load a schedule from CSV.

    Two layouts are understood, selected by the header: ``t_s,R_um`` for
    radius samples, or ``t_start_s,t_end_s,v_um_per_s`` for speed phases.
    Phase files must also carry the starting radius in a comment line of
    the form ``# r_start = <radius>``.
    """
    path = Path(path)
    text = path.read_text()
    header, data = _read_csv_rows(text)
    if header == ["t_s", "R_um"]:
        times = tuple(row[0] for row in data)
        radii = tuple(row[1] for row in data)
        return ErosionSchedule(times, radii, source=str(path))
    if header == ["t_start_s", "t_end_s", "v_um_per_s"]:
        r_start = None
        for ln in text.splitlines():
            stripped = ln.strip()
            if stripped.startswith("#") and "r_start" in stripped:
                r_start = float(stripped.split("=", 1)[1])
                break
        if r_start is None:
            raise ValueError(
                f"{path}: phase CSVs need a '# r_start = <radius>' comment line"
            )
        phases = [(row[0], row[1], row[2]) for row in data]
        return schedule_from_phases(r_start, phases, source=str(path))
    raise ValueError(
        f"{path}: unknown erosion CSV header {header!r}; expected "
        f"t_s,R_um or t_start_s,t_end_s,v_um_per_s"
    )


def retire_cells(state, r_now: float):
    """Retire every outermost alive cell whose inner face is at or above r_now.

    Operates on a :class:`capsim.simulate.State`; returns the mass removed.
    Idempotent for a fixed ``r_now``. The eroded mass of a cell is its
    exact volume times its concentration, booked as released instantly.
    """
    from . import kernel

    acc = np.zeros(3, dtype=np.float64)
    alive, status = kernel.retire_loop(
        state.c, state.volumes, state.faces_inner, state.cell_stratum,
        state.s_start, state.s_dr, state.if_owner, state.if_buf,
        state.lam, state.alive, float(r_now), acc,
    )
    state.alive = int(alive)
    if status == kernel.STATUS_PERMEABLE:
        raise RuntimeError(
            "boundary too permeable after erosion exposed a coarser stratum"
        )
    return float(acc[1]), int(status)
