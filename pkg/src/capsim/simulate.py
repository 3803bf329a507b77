"""Multi-rate time integration of a capsule.

Every stratum advances with its own dt, an integer multiple of the global
smallest step. The driver walks global ticks of that smallest step; on
each tick it first applies erosion, then updates every stratum whose
countdown expired, outermost first. Interface buffers carry the mass
exchanged between strata that update at different cadences.

``t_end`` and the sampling intervals are rounded to the nearest whole
number of global ticks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernel
from .erosion import ErosionSchedule
from .grid import FOUR_PI, StratumGrid, build_grids, check_cfl, clamp_cfl, harmonic_mean, insert_fictitious_strata
from .model import Capsule, CapsuleSpec, SimulationConfig, validate_capsule
from .release import ReleaseRecord, accumulate_release, mass_audit


@dataclass(frozen=True)
class Schedule:
    """Per-stratum tick multipliers over the global smallest dt."""

    dt_min: float
    multipliers: tuple[int, ...]


def build_schedule(capsule: Capsule) -> Schedule:
    return Schedule(capsule.dt_min, capsule.multipliers)


class SimulationFault(RuntimeError):
    """A numerical fault (instability or boundary violation) mid-run."""

    def __init__(self, status: int, stratum: int, tick: int, t: float):
        self.status = status
        self.stratum = stratum
        self.tick = tick
        self.t = t
        where = f" in stratum {stratum + 1}" if stratum >= 0 else ""
        super().__init__(
            f"{kernel.STATUS_MESSAGES.get(status, status)}{where} at tick {tick} (t={t:g} s)"
        )


class State:
    """Flat cell arrays plus interface metadata for the kernel."""

    def __init__(self, capsule: Capsule, scheme: str):
        self.capsule = capsule
        self.conservative = scheme == "conservative"
        self.lam = capsule.lam
        grids = build_grids(capsule)
        self.grids = grids
        n_strata = len(grids)
        counts = np.array([g.n for g in grids], dtype=np.int64)
        starts = np.zeros(n_strata, dtype=np.int64)
        np.cumsum(counts[:-1], out=starts[1:])
        n = int(counts.sum())

        self.s_start = starts
        self.s_count = counts
        self.s_dr = np.array([g.dr for g in grids], dtype=np.float64)
        self.s_dt = np.array([g.dt for g in grids], dtype=np.float64)
        self.s_k = np.array(capsule.multipliers, dtype=np.int64)
        self.s_beta = np.array([s.beta for s in capsule.strata], dtype=np.float64)
        self.s_dp = np.array([s.d_plus for s in capsule.strata], dtype=np.float64)
        self.s_dm = np.array([s.d_minus for s in capsule.strata], dtype=np.float64)

        self.volumes = np.concatenate([g.volumes for g in grids])
        faces_outer = np.concatenate([g.faces[1:] for g in grids])
        self.faces_inner = np.concatenate([g.faces[:-1] for g in grids])
        centers = np.concatenate([g.centers for g in grids])
        self.centers = centers
        self.rr2 = faces_outer * faces_outer
        self.cell_stratum = np.repeat(
            np.arange(n_strata, dtype=np.int64), counts
        )

        if self.conservative:
            gface = FOUR_PI * self.rr2
            gdiv = self.volumes
        else:
            gface = self.rr2.copy()
            gdiv = np.concatenate([
                g.dr * g.centers * g.centers for g in grids
            ])
        dr_cells = np.repeat(self.s_dr, counts)
        self.gf_dr = gface / dr_cells
        self.inv_gdiv = 1.0 / gdiv

        # Interface ownership: the finer grid computes the flux; on equal
        # dr the side updating more often wins, then the outer side.
        n_if = n_strata - 1
        self.if_owner = np.zeros(n_if, dtype=np.int64)
        self.if_hm_p = np.zeros(n_if, dtype=np.float64)
        self.if_hm_m = np.zeros(n_if, dtype=np.float64)
        self.if_gf_dr = np.zeros(n_if, dtype=np.float64)
        self.if_buf = np.zeros(n_if, dtype=np.float64)
        for i in range(n_if):
            a, b = capsule.strata[i], capsule.strata[i + 1]
            if b.dr < a.dr:
                owner = 1
            elif b.dr > a.dr:
                owner = 0
            elif b.dt < a.dt:
                owner = 1
            elif b.dt > a.dt:
                owner = 0
            else:
                owner = 1
            self.if_owner[i] = owner
            self.if_hm_p[i] = harmonic_mean(a.d_plus, b.d_plus)
            self.if_hm_m[i] = harmonic_mean(a.d_minus, b.d_minus)
            r_face = capsule.radii[i]
            geom = FOUR_PI * r_face * r_face if self.conservative else r_face * r_face
            own_dr = b.dr if owner == 1 else a.dr
            self.if_gf_dr[i] = geom / own_dr

        self.c = np.repeat(
            np.array([s.c_init for s in capsule.strata], dtype=np.float64), counts
        )
        self.alive = n
        self.tick = 0
        self.due = self.s_k.copy()
        self.dt_min = capsule.dt_min

    @property
    def t(self) -> float:
        return self.tick * self.dt_min

    def buffer_mass(self) -> float:
        """Pending interface mass in true mass units."""
        total = float(self.if_buf.sum())
        return total if self.conservative else FOUR_PI * total

    def in_capsule_mass(self) -> float:
        """Mass still inside, net of buffered transfers already booked on
        one side only."""
        inside = float(np.dot(self.c[: self.alive], self.volumes[: self.alive]))
        return inside - self.buffer_mass()

    def initial_mass(self) -> float:
        c0 = np.repeat(
            np.array([s.c_init for s in self.capsule.strata], dtype=np.float64),
            self.s_count,
        )
        return float(np.dot(c0, self.volumes))

    def stratum_values(self, index: int) -> np.ndarray:
        lo = int(self.s_start[index])
        hi = lo + int(self.s_count[index])
        return self.c[lo:hi]


@dataclass(frozen=True)
class ProfileSnapshot:
    t: float
    radii: np.ndarray
    values: np.ndarray


@dataclass
class SimulationResult:
    record: ReleaseRecord
    capsule: Capsule
    schedule: Schedule
    status: int
    profiles: list[ProfileSnapshot]
    audits: list[tuple[float, float]]
    d_minus_count: int
    state: State
    notes: list[str] = field(default_factory=list)

    @property
    def status_message(self) -> str:
        return kernel.STATUS_MESSAGES.get(self.status, str(self.status))


def prepare_capsule(config: SimulationConfig, clamp: bool = False) -> tuple[Capsule, list[str]]:
    """Validate, optionally grade dr jumps, and enforce stability."""
    notes: list[str] = []
    capsule = validate_capsule(config.capsule)
    if config.fictitious_max_ratio is not None:
        graded = insert_fictitious_strata(capsule, config.fictitious_max_ratio)
        if len(graded.strata) != len(capsule.strata):
            notes.append(
                f"inserted {len(graded.strata) - len(capsule.strata)} grading strata "
                f"(max dr ratio {config.fictitious_max_ratio:g})"
            )
        capsule = graded
    if clamp:
        clamped = clamp_cfl(capsule)
        if clamped is not capsule:
            notes.append("clamped unstable time steps onto 0.9x the CFL bound")
        capsule = clamped
    else:
        check_cfl(capsule)
    return capsule, notes


class Simulation:
    """One configured run. Build once, call :meth:`run`."""

    def __init__(self, config: SimulationConfig, clamp_cfl: bool = False,
                 use_direction: bool = True):
        self.config = config
        self.capsule, self.notes = prepare_capsule(config, clamp=clamp_cfl)
        self.schedule = build_schedule(self.capsule)
        self.use_direction = use_direction

        if config.erosion is not None:
            sched = config.erosion
            r_l = self.capsule.outer_radius
            if abs(sched.initial_radius - r_l) > 1e-9 * max(1.0, r_l):
                raise ValueError(
                    f"erosion schedule starts at R={sched.initial_radius:g} but the "
                    f"capsule outer radius is {r_l:g}"
                )
            er_t, er_r = sched.knots()
        else:
            er_t = np.zeros(1, dtype=np.float64)
            er_r = np.zeros(1, dtype=np.float64)
        self._er_t = er_t
        self._er_r = er_r

        self.state = State(self.capsule, config.scheme)

    def run(self) -> SimulationResult:
        cfg = self.config
        st = self.state
        dt_min = st.dt_min
        ticks_total = max(1, int(round(cfg.t_end / dt_min)))
        ticks_sample = max(1, int(round(cfg.output_every / dt_min)))
        ticks_profile = 0
        if cfg.profile_every > 0.0:
            ticks_profile = max(1, int(round(cfg.profile_every / dt_min)))

        record = ReleaseRecord(initial_mass=st.initial_mass())
        profiles: list[ProfileSnapshot] = []
        audits: list[tuple[float, float]] = []
        acc = np.zeros(3, dtype=np.float64)
        icnt = np.zeros(1, dtype=np.int64)
        erosion_on = cfg.erosion is not None
        r_floor = self.capsule.core_radius if erosion_on else 0.0

        def take_sample(t: float):
            record.decayed_mass = float(acc[2])
            d_flux = float(acc[0]) - record.m_flux
            d_eroded = float(acc[1]) - record.m_eroded
            accumulate_release(record, d_flux, d_eroded)
            record.sample(t)
            audits.append((t, mass_audit(record, st.in_capsule_mass())))

        def take_profile(t: float):
            profiles.append(ProfileSnapshot(
                t=t,
                radii=st.centers[: st.alive].copy(),
                values=st.c[: st.alive].copy(),
            ))

        take_sample(0.0)
        if ticks_profile:
            take_profile(0.0)

        status = kernel.STATUS_OK
        while st.tick < ticks_total:
            next_stop = ticks_total
            next_sample = (st.tick // ticks_sample + 1) * ticks_sample
            next_stop = min(next_stop, next_sample)
            if ticks_profile:
                next_prof = (st.tick // ticks_profile + 1) * ticks_profile
                next_stop = min(next_stop, next_prof)
            n_ticks = next_stop - st.tick
            eps_neg = 1e-14 * float(st.c[: st.alive].max(initial=0.0))
            status, alive, fault_stratum, tick = kernel.advance(
                st.c, st.inv_gdiv, st.gf_dr, st.volumes, st.rr2,
                st.faces_inner, st.cell_stratum,
                st.s_start, st.s_count, st.s_dr, st.s_dt, st.s_k,
                st.s_beta, st.s_dp, st.s_dm,
                st.if_owner, st.if_hm_p, st.if_hm_m, st.if_gf_dr, st.if_buf,
                self._er_t, self._er_r, r_floor, erosion_on,
                st.lam, self.use_direction, st.conservative, dt_min,
                st.tick, n_ticks, st.alive, st.due,
                eps_neg, acc, icnt,
            )
            st.alive = int(alive)
            st.tick = int(tick)
            t_now = st.tick * dt_min
            if status in (kernel.STATUS_NEGATIVE, kernel.STATUS_PERMEABLE):
                raise SimulationFault(status, int(fault_stratum), st.tick, t_now)
            if st.tick % ticks_sample == 0 or st.tick == ticks_total or status != kernel.STATUS_OK:
                take_sample(t_now)
            if ticks_profile and st.tick % ticks_profile == 0:
                take_profile(t_now)
            if status == kernel.STATUS_ERODED_OUT:
                break

        return SimulationResult(
            record=record,
            capsule=self.capsule,
            schedule=self.schedule,
            status=status,
            profiles=profiles,
            audits=audits,
            d_minus_count=int(icnt[0]),
            state=st,
            notes=self.notes,
        )


def simulate(config: SimulationConfig, clamp_cfl: bool = False,
             use_direction: bool = True) -> SimulationResult:
    """Convenience wrapper: build and run in one call."""
    return Simulation(config, clamp_cfl=clamp_cfl, use_direction=use_direction).run()
