"""Explicit finite-volume update kernels.

Cell data for the whole capsule lives in flat float64 arrays ordered
inner to outer, so each stratum is a contiguous slice. The hot loops are
numba-compiled, strictly sequential and free of fastmath, which keeps
runs bit-reproducible.

Two flux measures are supported. The conservative flavor uses exact face
areas and cell volumes, so summed mass changes telescope to round-off.
The "paper" flavor divides by dr * r_j^2 instead of the exact volume and
scales fluxes by r^2 instead of 4*pi*r^2; released masses are still
reported as true mass (the 4*pi is applied when accumulating).

Interface coupling: at every internal interface exactly one side (the
owner, normally the finer grid) computes the flux using a ghost cell that
mirrors the neighbour's last updated value. The mass the owner gains is
also pushed into the interface buffer; the partner applies the buffered
mass with opposite sign at its own next update and the buffer resets.
This keeps cross-interface mass transfer exact under subcycling.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

FOUR_PI = 4.0 * math.pi

STATUS_OK = 0
STATUS_NEGATIVE = 1       # concentration fell below the negativity guard
STATUS_PERMEABLE = 2      # erosion exposed a stratum with dr*lam > 1
STATUS_ERODED_OUT = 3     # nothing left to simulate

STATUS_MESSAGES = {
    STATUS_OK: "ok",
    STATUS_NEGATIVE: "negative concentration (instability)",
    STATUS_PERMEABLE: "boundary too permeable after erosion relocation",
    STATUS_ERODED_OUT: "capsule fully eroded",
}


def interface_diffusivity(
    c_inner: float,
    c_outer: float,
    d_plus_inner: float,
    alpha_inner: float = 1.0,
    d_plus_outer: float | None = None,
    alpha_outer: float | None = None,
    use_direction: bool = True,
) -> float:
    """Direction-dependent diffusivity at a cell face.

    Within a stratum (no outer material given) this is the plain direction
    test: D+ when the inner cell is at least as concentrated as the outer
    one, alpha*D+ otherwise. Across a material interface the harmonic mean
    of the direction-matched coefficients is used. Ties select D+.
    """
    outward = (not use_direction) or (c_inner >= c_outer)
    if d_plus_outer is None:
        d = d_plus_inner if outward else alpha_inner * d_plus_inner
        return d
    if alpha_outer is None:
        alpha_outer = 1.0
    if outward:
        a, b = d_plus_inner, d_plus_outer
    else:
        a, b = alpha_inner * d_plus_inner, alpha_outer * d_plus_outer
    if a == b:
        return a
    if a == 0.0 or b == 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


def numerical_flux(
    d_hat: float,
    r_half: float,
    c_inner: float,
    c_outer: float,
    dr: float,
    conservative: bool = False,
) -> float:
    """Face flux D_hat * r^2 * (C_outer - C_inner) / dr.

    Positive values move mass inward (toward the cell on the inner side of
    the face). The conservative flavor scales by the full face area
    4*pi*r^2; the reduced form uses r^2 alone. A face at r = 0 carries no
    flux by construction.
    """
    geom = r_half * r_half
    if conservative:
        geom *= FOUR_PI
    return d_hat * geom * (c_outer - c_inner) / dr


def robin_ghost(c_n: float, dr: float, lam: float) -> float:
    """Ghost value implementing the permeable outer boundary.

    Requires dr * lam <= 1; larger products would make the ghost negative,
    i.e. the boundary is too permeable for this grid.
    """
    if dr * lam > 1.0 + 1e-12:
        raise ValueError(f"boundary too permeable: dr*lambda = {dr * lam:g} > 1")
    return c_n * (1.0 - dr * lam)


@njit(cache=True)
def _interp_radius(er_t, er_r, floor, t):
    n = er_t.shape[0]
    if t <= er_t[0]:
        r = er_r[0]
    elif t >= er_t[n - 1]:
        r = er_r[n - 1]
    else:
        i = np.searchsorted(er_t, t)
        if er_t[i] == t:
            r = er_r[i]
        else:
            w = (t - er_t[i - 1]) / (er_t[i] - er_t[i - 1])
            r = er_r[i - 1] + w * (er_r[i] - er_r[i - 1])
    if r < floor:
        r = floor
    return r


@njit(cache=True)
def retire_loop(C, volumes, faces_inner, cell_stratum,
                s_start, s_dr, if_owner, if_buf,
                lam, alive, r_now, acc):
    """Retire outermost cells whose inner face lies at or beyond r_now.

    acc[1] accumulates the eroded mass. When a stratum dies while an
    unapplied interface buffer is pending on it, the pending amount leaves
    with the eroded cells, keeping the global balance exact.
    """
    retired = False
    while alive > 0 and faces_inner[alive - 1] >= r_now:
        j = alive - 1
        acc[1] += C[j] * volumes[j]
        alive -= 1
        ell = cell_stratum[j]
        if ell > 0 and alive == s_start[ell]:
            i = ell - 1
            if if_owner[i] == 0 and if_buf[i] != 0.0:
                acc[1] -= if_buf[i]
                if_buf[i] = 0.0
        retired = True
    if alive == 0:
        return alive, STATUS_ERODED_OUT
    if retired and s_dr[cell_stratum[alive - 1]] * lam > 1.0 + 1e-12:
        return alive, STATUS_PERMEABLE
    return alive, STATUS_OK


@njit(cache=True)
def update_stratum(C, inv_gdiv, gf_dr, volumes, rr2,
                   s_start, s_count, s_dr, s_dt, s_beta, s_dp, s_dm,
                   if_owner, if_hm_p, if_hm_m, if_gf_dr, if_buf,
                   ell, n_strata, alive, lam, use_dir, conservative,
                   eps_neg, acc, icnt):
    """Advance one stratum by its own dt. Returns a STATUS code.

    Updates in place with a single sweep: the three-point stencil only
    ever reads the old values of cells j and j+1, and the flux already
    computed at the inner face is carried along.
    """
    lo = s_start[ell]
    hi = lo + s_count[ell]
    if hi > alive:
        hi = alive
    if hi <= lo:
        return STATUS_OK

    dr = s_dr[ell]
    dt = s_dt[ell]
    beta = s_beta[ell]
    dp = s_dp[ell]
    dm = s_dm[ell]

    # Inner boundary: center symmetry, owned interface flux, or buffer.
    f_in = 0.0
    inner_extra = 0.0
    if ell > 0:
        i = ell - 1
        if if_owner[i] == 1:
            c_in = C[lo - 1]
            c_out = C[lo]
            if (not use_dir) or c_in >= c_out:
                dhat = if_hm_p[i]
            else:
                dhat = if_hm_m[i]
                icnt[0] += 1
            f_in = dhat * if_gf_dr[i] * (c_out - c_in)
            if_buf[i] -= dt * f_in
        elif if_buf[i] != 0.0:
            inner_extra = -if_buf[i] * inv_gdiv[lo]
            if_buf[i] = 0.0

    # Outer boundary: classify once before the sweep.
    j_last = hi - 1
    outer_extra = 0.0
    if ell < n_strata - 1 and if_owner[ell] == 1 and if_buf[ell] != 0.0:
        outer_extra = -if_buf[ell] * inv_gdiv[j_last]
        if_buf[ell] = 0.0
    robin = j_last == alive - 1
    owns_outer = (not robin) and ell < n_strata - 1 and if_owner[ell] == 0

    released = 0.0
    f_prev = f_in
    for j in range(lo, hi):
        c0 = C[j]
        if j < j_last:
            c1 = C[j + 1]
            if (not use_dir) or c0 >= c1:
                dhat = dp
            else:
                dhat = dm
                icnt[0] += 1
            f_out = dhat * gf_dr[j] * (c1 - c0)
        elif robin:
            f_out = -dp * (gf_dr[j] * dr) * lam * c0
            if conservative:
                released = -dt * f_out
            else:
                released = dt * dp * (FOUR_PI * rr2[j]) * lam * c0
        elif owns_outer:
            c1 = C[hi]
            if (not use_dir) or c0 >= c1:
                dhat = if_hm_p[ell]
            else:
                dhat = if_hm_m[ell]
                icnt[0] += 1
            f_out = dhat * if_gf_dr[ell] * (c1 - c0)
            if_buf[ell] += dt * f_out
        else:
            f_out = 0.0  # partner side: the outer neighbour owns this face

        delta = dt * ((f_out - f_prev) * inv_gdiv[j] - beta * c0)
        if j == lo:
            delta += inner_extra
        if j == j_last:
            delta += outer_extra
        cn = c0 + delta
        if cn < -eps_neg:
            return STATUS_NEGATIVE
        if beta != 0.0:
            acc[2] += dt * beta * c0 * volumes[j]
        C[j] = cn
        f_prev = f_out

    acc[0] += released
    return STATUS_OK


@njit(cache=True)
def advance(C, inv_gdiv, gf_dr, volumes, rr2, faces_inner, cell_stratum,
            s_start, s_count, s_dr, s_dt, s_k, s_beta, s_dp, s_dm,
            if_owner, if_hm_p, if_hm_m, if_gf_dr, if_buf,
            er_t, er_r, r_floor, erosion_on,
            lam, use_dir, conservative, dt_min,
            tick0, n_ticks, alive, due, eps_neg, acc, icnt):
    """Run n_ticks global ticks: erosion first, then due strata outer to inner.

    ``due`` carries the per-stratum countdown between calls so sampling
    chunk boundaries need not align with every stratum's cadence.
    Returns (status, alive, fault_stratum, tick_reached).
    """
    n_strata = s_start.shape[0]
    tick = tick0
    for _ in range(n_ticks):
        tick += 1
        if erosion_on:
            r_now = _interp_radius(er_t, er_r, r_floor, tick * dt_min)
            alive, st = retire_loop(C, volumes, faces_inner, cell_stratum,
                                    s_start, s_dr, if_owner, if_buf,
                                    lam, alive, r_now, acc)
            if st != STATUS_OK:
                return st, alive, -1, tick
        for ell in range(n_strata - 1, -1, -1):
            due[ell] -= 1
            if due[ell] > 0:
                continue
            due[ell] = s_k[ell]
            st = update_stratum(C, inv_gdiv, gf_dr, volumes, rr2,
                                s_start, s_count, s_dr, s_dt, s_beta, s_dp, s_dm,
                                if_owner, if_hm_p, if_hm_m, if_gf_dr, if_buf,
                                ell, n_strata, alive, lam, use_dir, conservative,
                                eps_neg, acc, icnt)
            if st != STATUS_OK:
                return st, alive, ell, tick
    return STATUS_OK, alive, -1, tick


def step_stratum(
    c,
    dr: float,
    dt: float,
    d_plus: float,
    alpha: float = 1.0,
    beta: float = 0.0,
    lam: float = 0.0,
    r_inner: float = 0.0,
    scheme: str = "conservative",
    use_direction: bool = True,
):
    """Advance an isolated stratum one step, for direct inspection.

    The inner boundary carries no flux (center symmetry or a sealed inner
    face); the outer boundary is the permeable ghost, impermeable when
    ``lam`` is zero. Returns (new concentrations, released mass,
    decayed mass).
    """
    c = np.ascontiguousarray(np.asarray(c, dtype=np.float64)).copy()
    n = c.size
    if n < 1:
        raise ValueError("need at least one cell")
    if dr * lam > 1.0 + 1e-12:
        raise ValueError(f"boundary too permeable: dr*lambda = {dr * lam:g} > 1")
    conservative = scheme == "conservative"
    faces = r_inner + dr * np.arange(n + 1, dtype=np.float64)
    rr = faces[1:]
    rc = r_inner + dr * (np.arange(n, dtype=np.float64) + 0.5)
    volumes = (FOUR_PI / 3.0) * (faces[1:] ** 3 - faces[:-1] ** 3)
    rr2 = rr * rr
    gface = FOUR_PI * rr2 if conservative else rr2
    gdiv = volumes if conservative else dr * rc * rc
    acc = np.zeros(3, dtype=np.float64)
    icnt = np.zeros(1, dtype=np.int64)
    empty_f = np.zeros(0, dtype=np.float64)
    empty_i = np.zeros(0, dtype=np.int64)
    eps_neg = 1e-14 * float(c.max()) if c.size else 0.0
    status = update_stratum(
        c, 1.0 / gdiv, gface / dr, volumes, rr2,
        np.array([0], dtype=np.int64), np.array([n], dtype=np.int64),
        np.array([dr], dtype=np.float64), np.array([dt], dtype=np.float64),
        np.array([beta], dtype=np.float64), np.array([d_plus], dtype=np.float64),
        np.array([alpha * d_plus], dtype=np.float64),
        empty_i, empty_f, empty_f, empty_f, empty_f,
        0, 1, n, float(lam), bool(use_direction), conservative,
        eps_neg, acc, icnt,
    )
    if status != STATUS_OK:
        raise RuntimeError(STATUS_MESSAGES[status])
    return c, float(acc[0]), float(acc[2])
