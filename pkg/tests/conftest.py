import numpy as np
import pytest

from capsim.model import CapsuleSpec, SimulationConfig, StratumSpec


def uniform_sphere(radius=100.0, dr=1.0, dt=0.1, d=0.5, lam=1.0, c0=1.0,
                   beta=0.0, alpha=1.0, splits=None):
    """A homogeneous sphere carved into one or more identical strata."""
    if splits is None:
        splits = [radius]
    strata = [
        StratumSpec(thickness=th, d_plus=d, dr=dr, dt=dt,
                    alpha=alpha, beta=beta, c_init=c0)
        for th in splits
    ]
    return CapsuleSpec(strata, lam)


def config_for(capsule, t_end=3600.0, output_every=60.0, **kw):
    return SimulationConfig(capsule=capsule, t_end=t_end,
                            output_every=output_every, **kw)


@pytest.fixture
def coarse_sphere():
    return uniform_sphere(dr=1.0, dt=0.1)


@pytest.fixture
def small_sphere():
    """A 10 um sphere that runs in milliseconds."""
    return uniform_sphere(radius=10.0, dr=0.5, dt=0.05)


def assert_close(a, b, rel=1e-12, abs_tol=0.0, msg=""):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(b), abs_tol if abs_tol > 0 else 1e-300)
    worst = np.max(np.abs(a - b) / scale)
    assert worst <= rel, f"{msg} worst relative deviation {worst:.3e} > {rel:.3e}"
