import math

import numpy as np
import pytest

from capsim.erosion import (
    ErosionSchedule,
    load_erosion_csv,
    radius_at,
    retire_cells,
    schedule_from_phases,
)
from capsim.model import CapsuleSpec, SimulationConfig, StratumSpec, validate_capsule
from capsim.simulate import State, SimulationFault, simulate

from conftest import config_for, uniform_sphere

FOUR_PI = 4.0 * math.pi


def core_shell(lam=0.0, shell_c0=2.0, shell_dr=0.5, shell_dt=0.05, core_d=0.1):
    """A 50 um inert core under a 10 um loaded shell."""
    return validate_capsule(CapsuleSpec(
        [StratumSpec(thickness=50.0, d_plus=core_d, dr=5.0, dt=5.0, c_init=0.0),
         StratumSpec(thickness=10.0, d_plus=0.1, dr=shell_dr, dt=shell_dt,
                     c_init=shell_c0)],
        lam,
    ))


class TestSchedule:
    def test_gastric_phase_arithmetic(self):
        sched = schedule_from_phases(
            285.794, [(0.0, 7200.0, 6.48e-7), (7200.0, 14400.0, 0.0)])
        assert radius_at(sched, 7200.0) == pytest.approx(285.794 - 0.0046656)
        assert radius_at(sched, 14400.0) == pytest.approx(285.794 - 0.0046656)

    def test_interpolation_between_knots(self):
        sched = ErosionSchedule((0.0, 100.0), (10.0, 8.0))
        assert radius_at(sched, 25.0) == pytest.approx(9.5)

    def test_constant_extrapolation(self):
        sched = ErosionSchedule((0.0, 10.0), (5.0, 4.0))
        assert radius_at(sched, -1.0) == 5.0
        assert radius_at(sched, 99.0) == 4.0

    def test_floor_clamp(self):
        sched = ErosionSchedule((0.0, 10.0), (5.0, 1.0))
        assert radius_at(sched, 10.0, floor=3.0) == 3.0
        assert radius_at(sched, 0.0, floor=3.0) == 5.0

    def test_monotonicity_enforced(self):
        with pytest.raises(ValueError, match="non-increasing"):
            ErosionSchedule((0.0, 1.0), (5.0, 6.0))
        with pytest.raises(ValueError, match="strictly increasing"):
            ErosionSchedule((0.0, 0.0), (5.0, 5.0))
        with pytest.raises(ValueError, match="t = 0"):
            ErosionSchedule((1.0, 2.0), (5.0, 4.0))

    def test_phases_must_tile(self):
        with pytest.raises(ValueError, match="gap"):
            schedule_from_phases(10.0, [(0.0, 1.0, 0.1), (2.0, 3.0, 0.1)])
        with pytest.raises(ValueError, match="non-negative"):
            schedule_from_phases(10.0, [(0.0, 1.0, -0.1)])

    def test_source_not_part_of_identity(self):
        a = ErosionSchedule((0.0, 1.0), (5.0, 4.0), source="x.csv")
        b = ErosionSchedule((0.0, 1.0), (5.0, 4.0))
        assert a == b


class TestCsv:
    def test_radius_samples_layout(self, tmp_path):
        p = tmp_path / "trace.csv"
        p.write_text("# comment\nt_s,R_um\n0,285.794\n7200,285.789\n")
        sched = load_erosion_csv(p)
        assert sched.times == (0.0, 7200.0)
        assert sched.radii == (285.794, 285.789)
        assert sched.source == str(p)

    def test_phase_layout(self, tmp_path):
        p = tmp_path / "phases.csv"
        p.write_text("# r_start = 285.794\n"
                     "t_start_s,t_end_s,v_um_per_s\n"
                     "0,7200,6.48e-7\n7200,14400,0\n")
        sched = load_erosion_csv(p)
        assert sched.radii[-1] == pytest.approx(285.794 - 0.0046656)

    def test_phase_layout_needs_r_start(self, tmp_path):
        p = tmp_path / "phases.csv"
        p.write_text("t_start_s,t_end_s,v_um_per_s\n0,7200,1e-7\n")
        with pytest.raises(ValueError, match="r_start"):
            load_erosion_csv(p)

    def test_unknown_header_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("time,radius\n0,5\n")
        with pytest.raises(ValueError, match="unknown erosion CSV header"):
            load_erosion_csv(p)

    def test_bad_number_reports_row(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("t_s,R_um\n0,285.794\nx,1\n")
        with pytest.raises(ValueError, match="row 3"):
            load_erosion_csv(p)


class TestRetirement:
    def test_whole_cells_only(self):
        cap = core_shell()
        st = State(cap, "conservative")
        # Surface moved to 59.75: cell [59.5, 60) still has its inner face
        # below the front, so nothing retires yet.
        eroded, _ = retire_cells(st, 59.75)
        assert eroded == 0.0
        assert st.alive == 10 + 20

    def test_inner_face_rule_and_exact_mass(self):
        cap = core_shell(shell_c0=2.0)
        st = State(cap, "conservative")
        eroded, _ = retire_cells(st, 59.5)
        vol = (FOUR_PI / 3) * (60.0 ** 3 - 59.5 ** 3)
        assert eroded == pytest.approx(2.0 * vol, rel=1e-15)
        assert st.alive == 29

    def test_idempotent(self):
        st = State(core_shell(), "conservative")
        first, _ = retire_cells(st, 57.0)
        second, _ = retire_cells(st, 57.0)
        assert first > 0.0
        assert second == 0.0

    def test_eroded_out_status(self):
        from capsim.kernel import STATUS_ERODED_OUT
        st = State(core_shell(), "conservative")
        _, status = retire_cells(st, 0.0)
        assert status == STATUS_ERODED_OUT
        assert st.alive == 0

    def test_exposing_permeable_stratum_raises(self):
        # Outer fine stratum satisfies dr*lam <= 1 but the coarse core
        # beneath does not; retiring into it must fail loudly.
        cap = validate_capsule(CapsuleSpec(
            [StratumSpec(thickness=50.0, d_plus=0.1, dr=5.0, dt=5.0),
             StratumSpec(thickness=10.0, d_plus=0.1, dr=0.5, dt=0.05)],
            1.0,
        ))
        st = State(cap, "conservative")
        with pytest.raises(RuntimeError, match="too permeable"):
            retire_cells(st, 50.0)


class TestSimulatedErosion:
    def schedule_for(self, cap, t_total, r_end):
        r0 = cap.outer_radius if hasattr(cap, "outer_radius") else 60.0
        return ErosionSchedule((0.0, t_total), (r0, r_end))

    def test_sealed_capsule_releases_by_erosion_only(self):
        # core_d=0 seals the interface too, so the shell stays uniform and
        # every microgram leaves through the erosion front.
        cap = core_shell(lam=0.0, core_d=0.0)
        sched = ErosionSchedule((0.0, 100.0), (60.0, 50.0))
        res = simulate(config_for(cap, t_end=100.0, output_every=10.0,
                                  erosion=sched))
        last = res.record.samples[-1]
        assert last.m_eroded > 0.0
        assert last.m_flux == 0.0
        assert last.m_total == last.m_eroded
        shell_mass = 2.0 * (FOUR_PI / 3) * (60.0 ** 3 - 50.0 ** 3)
        assert last.m_eroded == pytest.approx(shell_mass, rel=1e-12)

    def test_no_schedule_means_no_eroded_mass(self):
        res = simulate(config_for(core_shell(lam=0.0), t_end=50.0))
        assert all(s.m_eroded == 0.0 for s in res.record.samples)

    def test_schedule_clamps_at_physical_core(self):
        # The trace plunges to zero but the core stratum must survive.
        cap = core_shell(lam=0.0)
        sched = ErosionSchedule((0.0, 50.0), (60.0, 0.0))
        res = simulate(config_for(cap, t_end=100.0, output_every=10.0,
                                  erosion=sched))
        assert res.state.alive == 10
        assert res.state.faces_inner[res.state.alive - 1] < 50.0

    def test_partitioned_core_clamps_at_outermost_partition(self):
        cap = validate_capsule(CapsuleSpec(
            [StratumSpec(thickness=40.0, d_plus=0.1, dr=5.0, dt=5.0),
             StratumSpec(thickness=10.0, d_plus=0.1, dr=1.0, dt=1.0,
                         fictitious=True),
             StratumSpec(thickness=10.0, d_plus=0.1, dr=0.5, dt=0.05,
                         c_init=2.0)],
            0.0,
        ))
        assert cap.core_radius == 50.0
        sched = ErosionSchedule((0.0, 50.0), (60.0, 0.0))
        res = simulate(SimulationConfig(capsule=cap, t_end=100.0,
                                        output_every=10.0, erosion=sched))
        assert res.state.alive == 8 + 10

    def test_mismatched_start_radius_rejected(self):
        sched = ErosionSchedule((0.0, 1.0), (61.0, 60.0))
        with pytest.raises(ValueError, match="outer radius"):
            simulate(config_for(core_shell(), t_end=10.0, erosion=sched))

    def test_fully_eroded_single_physical_stratum_cannot_happen(self):
        # A lone stratum is all core, so even a schedule hitting zero
        # retires nothing.
        cap = uniform_sphere(radius=10.0, dr=0.5, dt=0.05, lam=0.0)
        sched = ErosionSchedule((0.0, 5.0), (10.0, 0.0))
        res = simulate(config_for(cap, t_end=10.0, output_every=5.0,
                                  erosion=sched))
        assert res.state.alive == 20
        assert res.record.samples[-1].m_eroded == 0.0

    def test_audit_exact_during_erosion(self):
        cap = core_shell(lam=0.1, shell_c0=2.0)
        sched = ErosionSchedule((0.0, 80.0), (60.0, 52.0))
        res = simulate(config_for(cap, t_end=100.0, output_every=5.0,
                                  erosion=sched))
        worst = max(abs(r) for _, r in res.audits)
        assert worst <= 1e-12

    def test_buffer_fixup_when_interface_stratum_dies(self):
        # Erode the whole shell between two of its partner updates; the
        # pending buffer must leave with the eroded mass, keeping the
        # audit exact.
        cap = validate_capsule(CapsuleSpec(
            [StratumSpec(thickness=50.0, d_plus=0.1, dr=5.0, dt=5.0, c_init=1.0),
             StratumSpec(thickness=10.0, d_plus=0.1, dr=0.5, dt=0.05, c_init=2.0)],
            0.0,
        ))
        sched = ErosionSchedule((0.0, 7.0), (60.0, 50.0))
        res = simulate(SimulationConfig(capsule=cap, t_end=20.0,
                                        output_every=1.0, erosion=sched))
        assert res.state.alive == 10
        assert float(res.state.if_buf.sum()) == 0.0
        worst = max(abs(r) for _, r in res.audits)
        assert worst <= 1e-12
