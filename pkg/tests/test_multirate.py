"""Cross-checks of the multi-rate driver against a transparent reimplementation.

The reference below replays the exact update discipline for a two-stratum
capsule in plain Python: one global tick of the smallest dt, strata updated
outermost first when their countdown expires, the interface owned by the
finer grid, owner gains buffered and applied to the partner with opposite
sign at its next update.
"""
import math

import numpy as np
import pytest

from capsim.grid import build_grids, harmonic_mean
from capsim.model import CapsuleSpec, SimulationConfig, StratumSpec, validate_capsule
from capsim.simulate import Simulation, State, simulate

from conftest import assert_close, config_for, uniform_sphere

FOUR_PI = 4.0 * math.pi


def two_strata(inner_kw, outer_kw, lam=0.3):
    base = dict(thickness=3.0, d_plus=0.5, alpha=1.0, beta=0.0, c_init=1.0)
    a = dict(base)
    a.update(inner_kw)
    b = dict(base)
    b.update(outer_kw)
    return validate_capsule(CapsuleSpec([StratumSpec(**a), StratumSpec(**b)], lam))


class Reference:
    """Two-stratum multirate integrator, kept deliberately naive."""

    def __init__(self, capsule, scheme="conservative", use_direction=True):
        self.cap = capsule
        self.cons = scheme == "conservative"
        self.use_dir = use_direction
        self.grids = build_grids(capsule)
        self.c = [np.full(g.n, s.c_init) for g, s in zip(self.grids, capsule.strata)]
        a, b = capsule.strata
        if b.dr < a.dr or (b.dr == a.dr and b.dt <= a.dt):
            self.owner = 1
        else:
            self.owner = 0
        self.hm_p = harmonic_mean(a.d_plus, b.d_plus)
        self.hm_m = harmonic_mean(a.d_minus, b.d_minus)
        self.buf = 0.0
        self.released = 0.0
        self.decayed = 0.0
        self.k = capsule.multipliers
        self.dt_min = capsule.dt_min
        self.due = list(self.k)

    def geom_face(self, r):
        return FOUR_PI * r * r if self.cons else r * r

    def gdiv(self, ell):
        g = self.grids[ell]
        return g.volumes if self.cons else g.dr * g.centers ** 2

    def update(self, ell):
        cap, g = self.cap, self.grids[ell]
        s = cap.strata[ell]
        c = self.c[ell]
        n = g.n
        dt, dr = s.dt, g.dr
        gdiv = self.gdiv(ell)
        new = c.copy()

        def dhat(c_in, c_out, dp, dm):
            if not self.use_dir or c_in >= c_out:
                return dp
            return dm

        # inner face flux
        if ell == 0:
            f_in = 0.0
            inner_extra = 0.0
        elif self.owner == 1:
            c_in = self.c[0][-1]
            c_out = c[0]
            d = dhat(c_in, c_out, self.hm_p, self.hm_m)
            f_in = d * self.geom_face(g.faces[0]) / dr * (c_out - c_in)
            self.buf -= dt * f_in
            inner_extra = 0.0
        else:
            f_in = 0.0
            inner_extra = -self.buf / gdiv[0]
            self.buf = 0.0

        outer_extra = 0.0
        if ell == 0 and self.owner == 1 and self.buf != 0.0:
            outer_extra = -self.buf / gdiv[-1]
            self.buf = 0.0

        f_prev = f_in
        for j in range(n):
            c0 = c[j]
            if j < n - 1:
                d = dhat(c0, c[j + 1], s.d_plus, s.d_minus)
                f_out = d * self.geom_face(g.faces[j + 1]) / dr * (c[j + 1] - c0)
            elif ell == len(self.c) - 1:
                f_out = -s.d_plus * self.geom_face(g.faces[-1]) * cap.lam * c0
                self.released += dt * s.d_plus * FOUR_PI * g.faces[-1] ** 2 * cap.lam * c0
            elif self.owner == 0:
                c_out = self.c[1][0]
                own_dr = self.grids[0].dr
                d = dhat(c0, c_out, self.hm_p, self.hm_m)
                f_out = d * self.geom_face(g.faces[-1]) / own_dr * (c_out - c0)
                self.buf += dt * f_out
            else:
                f_out = 0.0
            delta = dt * ((f_out - f_prev) / gdiv[j] - s.beta * c0)
            if j == 0:
                delta += inner_extra
            if j == n - 1:
                delta += outer_extra
            if s.beta:
                self.decayed += dt * s.beta * c0 * g.volumes[j]
            new[j] = c0 + delta
            f_prev = f_out
        self.c[ell] = new

    def run(self, n_ticks):
        for _ in range(n_ticks):
            for ell in (1, 0):
                self.due[ell] -= 1
                if self.due[ell] > 0:
                    continue
                self.due[ell] = self.k[ell]
                self.update(ell)

    @property
    def flat(self):
        return np.concatenate(self.c)

    def buffer_mass(self):
        return self.buf if self.cons else FOUR_PI * self.buf


CASES = {
    "fine-outer": (dict(dr=1.0, dt=0.3), dict(dr=0.5, dt=0.1, d_plus=0.2, c_init=0.2)),
    "fine-inner": (dict(dr=0.5, dt=0.1, d_plus=0.2, c_init=0.2), dict(dr=1.0, dt=0.3)),
    "anisotropic": (dict(dr=1.0, dt=0.3, alpha=0.4, c_init=0.1),
                    dict(dr=0.5, dt=0.1, d_plus=0.2, alpha=0.3)),
    "with-decay": (dict(dr=1.0, dt=0.3, beta=1e-3), dict(dr=0.5, dt=0.1, beta=2e-3)),
}


class TestAgainstReference:
    @pytest.mark.parametrize("scheme", ["conservative", "paper"])
    @pytest.mark.parametrize("name", sorted(CASES))
    def test_state_and_totals_match(self, name, scheme):
        inner_kw, outer_kw = CASES[name]
        cap = two_strata(inner_kw, outer_kw)
        n_ticks = 90
        t_end = n_ticks * cap.dt_min

        sim = Simulation(SimulationConfig(capsule=cap, t_end=t_end,
                                          output_every=t_end, scheme=scheme))
        result = sim.run()
        ref = Reference(cap, scheme=scheme)
        ref.run(n_ticks)

        assert_close(result.state.c, ref.flat, rel=1e-12)
        assert result.record.m_flux == pytest.approx(ref.released, rel=1e-12)
        assert result.record.decayed_mass == pytest.approx(ref.decayed, rel=1e-12, abs=1e-18)
        assert result.state.buffer_mass() == pytest.approx(ref.buffer_mass(), rel=1e-12, abs=1e-18)

    def test_direction_toggle_matches_reference(self):
        inner_kw, outer_kw = CASES["anisotropic"]
        cap = two_strata(inner_kw, outer_kw)
        n_ticks = 60
        sim = Simulation(SimulationConfig(capsule=cap, t_end=n_ticks * cap.dt_min,
                                          output_every=n_ticks * cap.dt_min),
                         use_direction=False)
        result = sim.run()
        ref = Reference(cap, use_direction=False)
        ref.run(n_ticks)
        assert_close(result.state.c, ref.flat, rel=1e-12)


class TestOwnership:
    def build(self, inner_kw, outer_kw):
        return State(two_strata(inner_kw, outer_kw), "conservative")

    def test_finer_dr_owns(self):
        assert self.build(dict(dr=1.0, dt=0.1), dict(dr=0.5, dt=0.1)).if_owner[0] == 1
        assert self.build(dict(dr=0.5, dt=0.1), dict(dr=1.0, dt=0.1)).if_owner[0] == 0

    def test_equal_dr_faster_side_owns(self):
        assert self.build(dict(dr=0.5, dt=0.3), dict(dr=0.5, dt=0.1)).if_owner[0] == 1
        assert self.build(dict(dr=0.5, dt=0.1), dict(dr=0.5, dt=0.3)).if_owner[0] == 0

    def test_full_tie_outer_owns(self):
        assert self.build(dict(dr=0.5, dt=0.1), dict(dr=0.5, dt=0.1)).if_owner[0] == 1

    def test_owner_dr_sets_interface_gradient(self):
        st = self.build(dict(dr=1.0, dt=0.1), dict(dr=0.5, dt=0.1))
        r = st.capsule.radii[0]
        assert st.if_gf_dr[0] == pytest.approx(FOUR_PI * r * r / 0.5)


class TestSplitExactness:
    def test_split_reproduces_merged_run(self, coarse_sphere):
        merged = simulate(config_for(coarse_sphere, t_end=600.0))
        split = simulate(config_for(uniform_sphere(splits=(40.0, 60.0)), t_end=600.0))
        for a, b in zip(merged.record.samples, split.record.samples):
            assert a.t == b.t
            assert b.m_total == pytest.approx(a.m_total, rel=1e-12, abs=1e-18)
        assert_close(split.state.c, merged.state.c, rel=1e-12)

    def test_three_way_split(self, coarse_sphere):
        merged = simulate(config_for(coarse_sphere, t_end=300.0))
        split = simulate(config_for(uniform_sphere(splits=(25.0, 25.0, 50.0)),
                                    t_end=300.0))
        assert_close(split.state.c, merged.state.c, rel=1e-12)


class TestDriver:
    def test_chunking_invariance(self):
        cap = two_strata(dict(dr=1.0, dt=0.3), dict(dr=0.5, dt=0.1, d_plus=0.2))
        t_end = 30 * cap.dt_min
        one = simulate(SimulationConfig(capsule=cap, t_end=t_end, output_every=t_end))
        many = simulate(SimulationConfig(capsule=cap, t_end=t_end,
                                         output_every=cap.dt_min))
        assert np.array_equal(one.state.c, many.state.c)
        assert one.record.m_total == many.record.m_total

    def test_profiles_are_snapshots(self, small_sphere):
        cfg = config_for(small_sphere, t_end=10.0, output_every=5.0, profile_every=5.0)
        result = simulate(cfg)
        assert [p.t for p in result.profiles] == [0.0, 5.0, 10.0]
        assert result.profiles[0].values == pytest.approx(
            np.full(result.profiles[0].values.size, 1.0))
        assert not np.array_equal(result.profiles[0].values, result.profiles[-1].values)

    def test_audit_residuals_tiny_under_subcycling(self):
        cap = two_strata(dict(dr=1.0, dt=0.3, beta=1e-4),
                         dict(dr=0.5, dt=0.1, d_plus=0.2))
        result = simulate(SimulationConfig(capsule=cap, t_end=30.0, output_every=3.0))
        worst = max(abs(r) for _, r in result.audits)
        assert worst <= 1e-12

    def test_d_minus_counter_counts_inward_faces(self, small_sphere):
        res = simulate(config_for(small_sphere, t_end=5.0))
        assert res.d_minus_count == 0  # outward-only decay of a uniform sphere
