"""Result emission: CSV files, run manifests, and plot-ready data.

All numbers are written with at most 12 significant digits and the
shortest representation that survives a round trip at that precision, so
repeated runs produce byte-identical files.
"""
from __future__ import annotations

import json
import math
import platform
import sys
import time
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numba
import numpy as np
import scipy

from .calibration import FitResult, SweepSeries
from .release import ReleaseRecord
from .simulate import ProfileSnapshot, SimulationResult
from .validation import ValidationReport

PathLike = Union[str, Path]


def fmt(x: float) -> str:
    """Shortest stable decimal form, capped at 12 significant digits."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    text = repr(x)
    mantissa = text.split("e")[0]
    if sum(ch.isdigit() for ch in mantissa) > 12:
        text = f"{x:.12g}"
    return text


def _write_rows(path: Path, header: Sequence[str],
                rows: Iterable[Sequence[str]]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def write_release_csv(path: PathLike, record: ReleaseRecord) -> Path:
    """Cumulative release curve: `t_s,m_flux_ug,m_eroded_ug,m_total_ug,fraction`."""
    if not record.samples:
        raise ValueError("empty record: nothing to write")
    path = Path(path)
    rows = (
        (fmt(s.t), fmt(s.m_flux), fmt(s.m_eroded), fmt(s.m_total), fmt(s.fraction))
        for s in record.samples
    )
    _write_rows(path, ("t_s", "m_flux_ug", "m_eroded_ug", "m_total_ug", "fraction"), rows)
    return path


def write_profiles_csv(path: PathLike, profiles: Sequence[ProfileSnapshot]) -> Path:
    """Concentration profiles, long format: `t_s,r_um,c_ug_per_um3`."""
    if not profiles:
        raise ValueError("empty profile list: nothing to write")
    path = Path(path)

    def rows():
        for snap in profiles:
            for r, c in zip(snap.radii, snap.values):
                yield (fmt(snap.t), fmt(r), fmt(c))

    _write_rows(path, ("t_s", "r_um", "c_ug_per_um3"), rows())
    return path


def write_validation_csv(path: PathLike, report: ValidationReport) -> Path:
    path = Path(path)
    rows = (
        (r.config, fmt(r.mean_rel_err_pct), fmt(r.max_rel_err_pct), fmt(r.runtime_s))
        for r in report.rows
    )
    _write_rows(path, ("config", "mean_rel_err_pct", "max_rel_err_pct", "runtime_s"), rows)
    return path


def write_sweep_csv(path: PathLike, family: Sequence[SweepSeries]) -> Path:
    """Curve family, long format keyed by the swept value."""
    if not family:
        raise ValueError("empty sweep family: nothing to write")
    path = Path(path)

    def rows():
        for series in family:
            if series.failed:
                continue
            label = f"{series.parameter}={fmt(series.value)}"
            for t, m, f in zip(series.times, series.masses, series.fractions):
                yield (label, fmt(t), fmt(m), fmt(f))

    _write_rows(path, ("series", "t_s", "m_total_ug", "fraction"), rows())
    return path


def write_oracle_csv(path: PathLike, times: np.ndarray, fractions: np.ndarray,
                     masses: Optional[np.ndarray] = None) -> Path:
    path = Path(path)
    if masses is None:
        rows = ((fmt(t), fmt(f)) for t, f in zip(times, fractions))
        _write_rows(path, ("t_s", "fraction"), rows)
    else:
        rows = (
            (fmt(t), fmt(m), fmt(f))
            for t, m, f in zip(times, masses, fractions)
        )
        _write_rows(path, ("t_s", "m_total_ug", "fraction"), rows)
    return path


def write_fit_trace_csv(path: PathLike, result: FitResult,
                        parameter_paths: Sequence[str]) -> Path:
    path = Path(path)
    header = ("evaluation", *parameter_paths, "objective")
    rows = (
        (str(i), *(fmt(v) for v in values), fmt(loss))
        for i, (values, loss) in enumerate(result.trace, start=1)
    )
    _write_rows(path, header, rows)
    return path


def write_fit_report(path: PathLike, result: FitResult) -> Path:
    path = Path(path)
    path.write_text(result.summary() + "\n")
    return path


def release_svg(record: ReleaseRecord, width: int = 640, height: int = 400) -> str:
    """A minimal standalone SVG line chart of the release fraction.

    Pure text emission for quick visual checks; for real figures use the
    CSVs with a plotting tool.
    """
    if not record.samples:
        raise ValueError("empty record: nothing to plot")
    ts = record.times()
    fs = record.fractions()
    t_max = float(ts[-1]) if ts[-1] > 0 else 1.0
    f_max = max(1e-12, float(fs.max()))
    pad = 40
    w, h = width - 2 * pad, height - 2 * pad
    pts = " ".join(
        f"{pad + w * t / t_max:.2f},{height - pad - h * f / f_max:.2f}"
        for t, f in zip(ts, fs)
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
        f'<rect width="{width}" height="{height}" fill="white"/>'
        f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>'
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="gray"/>'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="gray"/>'
        f'<text x="{width // 2}" y="{height - 8}" font-size="12" text-anchor="middle">t [s]</text>'
        f'<text x="12" y="{height // 2}" font-size="12" transform="rotate(-90 12 {height // 2})" '
        f'text-anchor="middle">released fraction</text>'
        f"</svg>"
    )


def write_manifest(out_dir: PathLike, command: str, config_path: Optional[PathLike],
                   outputs: Sequence[PathLike],
                   resolved: Optional[dict] = None) -> Path:
    """Drop a manifest.json describing the run next to its outputs."""
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "config": str(config_path) if config_path is not None else None,
        "outputs": sorted(Path(p).name for p in outputs),
        "wall_clock_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "numba": numba.__version__,
            "scipy": scipy.__version__,
        },
    }
    if resolved is not None:
        manifest["resolved"] = resolved
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def resolved_snapshot(result: SimulationResult) -> dict:
    """Parameter snapshot for the manifest, after grading and clamping."""
    cap = result.capsule
    return {
        "lambda": cap.lam,
        "dt_min": result.schedule.dt_min,
        "multipliers": list(result.schedule.multipliers),
        "strata": [
            {
                "label": s.name(i),
                "thickness": s.thickness,
                "d_plus": s.d_plus,
                "alpha": s.alpha,
                "beta": s.beta,
                "c_init": s.c_init,
                "dr": s.dr,
                "dt": s.dt,
                "fictitious": s.fictitious,
            }
            for i, s in enumerate(cap.strata)
        ],
        "notes": list(result.notes),
    }


def ensure_out_dir(path: PathLike) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def print_err(message: str) -> None:
    print(message, file=sys.stderr)
