"""Closed-form release curve for a homogeneous sphere.

Transient diffusion out of a uniformly loaded sphere of radius R with a
partially permeable surface admits the classical separation-of-variables
series. With the surface condition dc/dr = -lam * c the eigenvalues mu_n
solve

    mu * cot(mu) = 1 - Bi,        Bi = lam * R,

one root per branch interval (n*pi, (n+1)*pi). The released fraction is

    f(t) = sum_n b_n * (1 - exp(-D * mu_n^2 * t / R^2)),
    b_n  = 12 * (sin mu_n - mu_n cos mu_n)^2 / (mu_n^3 * (2 mu_n - sin 2 mu_n)).

In the perfect-sink limit (Bi -> infinity) the eigenvalues degenerate to
mu_n = n*pi and b_n = 6 / (n*pi)^2, the textbook result. An impermeable
boundary (lam = 0) releases nothing.

This module is deliberately independent of the finite-volume machinery so
it can serve as a reference for validating it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OracleSpec:
    """Homogeneous sphere for the series solution."""

    radius: float
    diffusivity: float
    lam: float                # um/s; math.inf selects the perfect-sink limit
    c_init: float = 1.0
    n_terms: int = 128
    eig_tol: float = 1e-9     # accepted residual of mu*cot(mu) - (1 - Bi)

    def __post_init__(self):
        if not (self.radius > 0.0):
            raise ValueError("radius must be positive")
        if self.diffusivity < 0.0:
            raise ValueError("diffusivity must be non-negative")
        if self.lam < 0.0:
            raise ValueError("lam must be non-negative")
        if self.n_terms < 1:
            raise ValueError("n_terms must be >= 1")

    @property
    def biot(self) -> float:
        return self.lam * self.radius

    @property
    def initial_mass(self) -> float:
        return (4.0 / 3.0) * math.pi * self.radius ** 3 * self.c_init


def _eigen_residual(mu: float, bi: float) -> float:
    return mu / math.tan(mu) - (1.0 - bi)


def robin_sphere_eigenvalues(bi: float, n_terms: int, tol: float = 1e-9) -> np.ndarray:
    """First n_terms positive roots of mu*cot(mu) = 1 - Bi.

    Bisection on g(mu) = mu*cos(mu) - (1 - Bi)*sin(mu), which shares the
    roots but stays finite across the cot poles. Each branch interval
    (n*pi, (n+1)*pi) brackets exactly one root for Bi > 0.
    """
    if bi <= 0.0:
        raise ValueError(f"Biot number must be positive, got {bi}")
    one_mb = 1.0 - bi

    def g(mu: float) -> float:
        return mu * math.cos(mu) - one_mb * math.sin(mu)

    roots = np.empty(n_terms, dtype=np.float64)
    for n in range(n_terms):
        lo = n * math.pi
        hi = (n + 1) * math.pi
        if n == 0:
            # g(0) = 0 is the trivial root; just inside, g ~ Bi * mu > 0.
            lo = 1e-12
        glo = g(lo)
        ghi = g(hi)
        if glo == 0.0:
            roots[n] = lo
            continue
        if glo * ghi > 0.0:
            raise RuntimeError(f"eigenvalue bracket failed on branch {n}")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            gm = g(mid)
            if gm == 0.0:
                lo = hi = mid
                break
            if glo * gm < 0.0:
                hi = mid
            else:
                lo = mid
                glo = gm
            if hi - lo <= 1e-15 * max(1.0, hi):
                break
        mu = 0.5 * (lo + hi)
        s2 = math.sin(mu) ** 2
        res = abs(_eigen_residual(mu, bi)) if s2 != 0.0 else 0.0
        # Condition the acceptance on the local derivative of mu*cot(mu),
        # which blows up like mu/sin^2(mu) near the poles approached as
        # Bi -> infinity; a machine-precision root is not a failure there.
        scale = max(1.0, abs(one_mb), mu, mu / s2 if s2 > 0.0 else 1.0)
        if res > tol * scale:
            raise RuntimeError(
                f"eigenvalue {n} converged poorly: residual {res:g} beyond tolerance"
            )
        roots[n] = mu
    return roots


def _series_coefficients(spec: OracleSpec) -> tuple[np.ndarray, np.ndarray]:
    """(mu_n, b_n) pairs for the released-fraction series."""
    n = np.arange(1, spec.n_terms + 1, dtype=np.float64)
    if math.isinf(spec.lam):
        mu = n * math.pi
        b = 6.0 / (mu * mu)
        return mu, b
    mu = robin_sphere_eigenvalues(spec.biot, spec.n_terms, tol=spec.eig_tol)
    s = np.sin(mu)
    c = np.cos(mu)
    b = 12.0 * (s - mu * c) ** 2 / (mu ** 3 * (2.0 * mu - np.sin(2.0 * mu)))
    return mu, b


def truncation_bound(spec: OracleSpec) -> float:
    """Upper bound on the series truncation error of the fraction.

    The coefficients are non-negative and sum to 1 over all modes, so the
    untruncated tail mass bounds the error at every time.
    """
    if spec.lam == 0.0:
        return 0.0
    _, b = _series_coefficients(spec)
    return max(0.0, 1.0 - float(b.sum()))


def analytic_release(spec: OracleSpec, t) -> np.ndarray:
    """Released fraction at time(s) t.

    Non-decreasing in t, exactly 0 at t = 0, bounded by 1. An impermeable
    boundary returns zeros.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(t_arr < 0.0):
        raise ValueError("t must be non-negative")
    if spec.lam == 0.0 or spec.diffusivity == 0.0 or spec.c_init == 0.0:
        out = np.zeros_like(t_arr)
        return out if np.ndim(t) else float(out[0])
    mu, b = _series_coefficients(spec)
    rates = spec.diffusivity * mu * mu / (spec.radius * spec.radius)
    f = (b[None, :] * (-np.expm1(-np.outer(t_arr, rates)))).sum(axis=1)
    return f if np.ndim(t) else float(f[0])


def analytic_release_mass(spec: OracleSpec, t) -> np.ndarray:
    """Released mass rather than fraction."""
    f = analytic_release(spec, t)
    return spec.initial_mass * f
