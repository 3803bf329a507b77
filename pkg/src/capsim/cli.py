"""Command-line interface.

Subcommands:

- ``simulate <cfg>``: run one release simulation, emit release.csv
  (plus profiles.csv when profiling is on) and a manifest.
- ``validate``: run the six-configuration grid-comparison suite against
  the analytic reference and emit a report; ``--paper-reference``
  switches to the brute-force reference grid (very slow).
- ``fit <cfg> <data.csv>``: calibrate the free parameters declared in
  the config against an experimental release curve.
- ``sweep <cfg> --param <path> --values <list>``: one-at-a-time
  sensitivity scan, one curve per value.
- ``oracle <cfg>``: evaluate the analytic series for a homogeneous
  capsule on the output time grid.

Exit codes: 0 success, 1 usage, 2 invalid configuration, 3 runtime
fault (diagnostics name the stratum and tick).
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import output
from .calibration import FitProblem, fit as run_fit, sweep_parameter
from .config import ConfigError, ParsedConfig, load_config
from .erosion import _read_csv_rows
from .model import CapsuleValidationError, CflError, SimulationConfig
from .oracle import OracleSpec, analytic_release, truncation_bound
from .simulate import SimulationFault, simulate
from .validation import run_validation_suite, validation_cases

USAGE_EXIT = 1
CONFIG_EXIT = 2
FAULT_EXIT = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this CLI reserves 2 for bad configs."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="capsim", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p, with_config=True):
        if with_config:
            p.add_argument("config", help="configuration file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--scheme", choices=("conservative", "paper"),
                       help="override the flux-divisor flavor")
        p.add_argument("--output-every", type=float, metavar="S",
                       help="override the sampling interval, seconds")
        p.add_argument("--clamp-cfl", action="store_true",
                       help="shrink unstable time steps to 0.9x the bound "
                            "instead of failing")

    p_sim = sub.add_parser("simulate", help="run one simulation")
    common(p_sim)
    p_sim.add_argument("--profile-every", type=float, metavar="S",
                       help="also sample concentration profiles every S seconds")
    p_sim.add_argument("--svg", action="store_true",
                       help="emit a minimal release-curve chart (release.svg)")

    p_val = sub.add_parser("validate", help="run the grid-comparison suite")
    common(p_val, with_config=False)
    p_val.add_argument("--paper-reference", action="store_true",
                       help="compare against the brute-force reference grid "
                            "instead of the analytic series (hours of runtime)")
    p_val.add_argument("--cases", metavar="SUBSTR", action="append",
                       help="only run cases whose name contains SUBSTR "
                            "(repeatable; a case runs if any filter matches)")

    p_fit = sub.add_parser("fit", help="calibrate parameters to data")
    common(p_fit)
    p_fit.add_argument("data", help="experimental CSV with header t_min,release")
    p_fit.add_argument("--max-evaluations", type=int,
                       help="override the simulation budget")

    p_sweep = sub.add_parser("sweep", help="one-at-a-time parameter scan")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True, metavar="PATH",
                         help="parameter path, e.g. lambda or strata[2].d_plus")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values; inf allowed for lambda")
    p_sweep.add_argument("--multipliers", action="store_true",
                         help="treat values as multipliers of the reference value")

    p_oracle = sub.add_parser("oracle", help="analytic curve for a homogeneous capsule")
    common(p_oracle)
    p_oracle.add_argument("--terms", type=int, default=128,
                          help="series terms (default 128)")

    return parser


def _apply_overrides(config: SimulationConfig, args) -> SimulationConfig:
    updates = {}
    if getattr(args, "scheme", None):
        updates["scheme"] = args.scheme
    if getattr(args, "output_every", None):
        updates["output_every"] = args.output_every
    if getattr(args, "profile_every", None):
        updates["profile_every"] = args.profile_every
    return replace(config, **updates) if updates else config


def _load(args) -> ParsedConfig:
    return load_config(args.config)


def _cmd_simulate(args) -> int:
    parsed = _load(args)
    config = _apply_overrides(parsed.simulation, args)
    result = simulate(config, clamp_cfl=args.clamp_cfl)
    out = output.ensure_out_dir(args.out)
    written = [output.write_release_csv(out / "release.csv", result.record)]
    if result.profiles:
        written.append(output.write_profiles_csv(out / "profiles.csv", result.profiles))
    if args.svg:
        svg_path = out / "release.svg"
        svg_path.write_text(output.release_svg(result.record))
        written.append(svg_path)
    for note in result.notes:
        output.print_err(f"note: {note}")
    if result.audits:
        worst = max(abs(r) for _, r in result.audits)
        output.print_err(f"mass audit: worst relative residual {worst:.3e}")
    output.write_manifest(out, "simulate", args.config, written,
                          resolved=output.resolved_snapshot(result))
    print(f"final release fraction: {result.record.fraction:.6f}")
    print(f"wrote {', '.join(str(p) for p in written)}")
    return 0


def _cmd_validate(args) -> int:
    cases = None
    if args.cases:
        wanted = [w.strip().lower() for w in args.cases if w.strip()]
        cases = [c for c in validation_cases()
                 if any(w in c.name.lower() for w in wanted)]
        if not cases:
            raise ConfigError(f"no validation case matches {args.cases!r}")
    report = run_validation_suite(
        reference="brute" if args.paper_reference else "oracle",
        scheme=args.scheme or "conservative",
        output_every=args.output_every,
        cases=cases,
        progress=output.print_err,
    )
    out = output.ensure_out_dir(args.out)
    written = [output.write_validation_csv(out / "validation.csv", report)]
    output.write_manifest(out, "validate", None, written)
    print(report.text_table())
    return 0


def _initial_capsule_mass(config: SimulationConfig) -> float:
    total = 0.0
    r = 0.0
    for s in config.capsule.strata:
        r_out = r + s.thickness
        total += s.c_init * (4.0 / 3.0) * math.pi * (r_out**3 - r**3)
        r = r_out
    return total


def _load_release_data(path: str, unit: str,
                       initial_mass: float) -> tuple[np.ndarray, np.ndarray]:
    header, rows = _read_csv_rows(Path(path).read_text())
    if header != ["t_min", "release"]:
        raise ConfigError(
            f"{path}: expected header t_min,release, got {','.join(header)}"
        )
    if not rows:
        raise ConfigError(f"{path}: no data")
    times = np.array([r[0] for r in rows]) * 60.0
    release = np.array([r[1] for r in rows])
    if unit == "fraction":
        if initial_mass <= 0:
            raise ConfigError(
                "release_unit = fraction needs a capsule with initial mass"
            )
        release = release * initial_mass
    return times, release


def _cmd_fit(args) -> int:
    parsed = _load(args)
    settings = parsed.fit
    if settings is None or not settings.parameters:
        raise ConfigError(
            f"{args.config}: fit needs at least one [parameter] section"
        )
    config = _apply_overrides(parsed.simulation, args)
    times, masses = _load_release_data(
        args.data, settings.release_unit, _initial_capsule_mass(config))
    problem = FitProblem(
        base=config,
        parameters=settings.parameters,
        target_times=times,
        target_masses=masses,
        mode=settings.mode,
    )
    initial = [
        init if init is not None else p.clip(p.current(config.capsule))
        for p, init in zip(settings.parameters, settings.initials)
    ]
    budget = args.max_evaluations or settings.max_evaluations
    result = run_fit(problem, initial, max_evaluations=budget,
                     seed=settings.seed)
    out = output.ensure_out_dir(args.out)
    written = [
        output.write_fit_report(out / "fit_report.txt", result),
        output.write_fit_trace_csv(
            out / "fit_trace.csv", result,
            [p.path for p in settings.parameters]),
    ]
    output.write_manifest(out, "fit", args.config, written,
                          resolved={"best": result.values,
                                    "objective": result.objective,
                                    "evaluations": result.n_evaluations})
    print(result.summary())
    return 0


def _parse_values(text: str) -> list[float]:
    values = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if token.lower() in ("inf", "+inf", "infinity"):
            values.append(math.inf)
            continue
        try:
            values.append(float(token))
        except ValueError:
            raise ConfigError(f"bad sweep value {token!r}") from None
    if not values:
        raise ConfigError("empty value list")
    return values


def _cmd_sweep(args) -> int:
    parsed = _load(args)
    config = _apply_overrides(parsed.simulation, args)
    values = _parse_values(args.values)
    family = sweep_parameter(config, args.param, values,
                             multipliers=args.multipliers,
                             clamp_cfl=True)
    failed = [s for s in family if s.failed]
    for s in failed:
        output.print_err(f"{s.parameter}={s.value:g} failed: {s.error}")
    if len(failed) == len(family):
        output.print_err("every sweep member failed")
        return FAULT_EXIT
    out = output.ensure_out_dir(args.out)
    written = [output.write_sweep_csv(out / "sweep.csv", family)]
    output.write_manifest(out, "sweep", args.config, written,
                          resolved={"param": args.param, "values": values})
    print(f"wrote {written[0]} ({len(family) - len(failed)} of {len(family)} curves)")
    return 0


def _cmd_oracle(args) -> int:
    parsed = _load(args)
    config = _apply_overrides(parsed.simulation, args)
    strata = config.capsule.strata
    first = strata[0]
    uniform = all(
        s.d_plus == first.d_plus and s.alpha == 1.0 and s.beta == 0.0
        and s.c_init == first.c_init
        for s in strata
    )
    if not uniform:
        raise ConfigError(
            "the analytic curve needs a homogeneous capsule: one diffusivity, "
            "alpha = 1, beta = 0, uniform initial concentration"
        )
    radius = sum(s.thickness for s in strata)
    spec = OracleSpec(
        radius=radius,
        diffusivity=first.d_plus,
        lam=config.capsule.lam,
        c_init=first.c_init,
        n_terms=args.terms,
    )
    n = int(round(config.t_end / config.output_every))
    times = config.output_every * np.arange(n + 1)
    fractions = np.asarray(analytic_release(spec, times))
    masses = fractions * spec.initial_mass
    out = output.ensure_out_dir(args.out)
    written = [output.write_oracle_csv(out / "oracle.csv", times, fractions, masses)]
    output.write_manifest(out, "oracle", args.config, written)
    bound = truncation_bound(spec)
    print(f"truncation bound: {bound:.3e} ({args.terms} terms)")
    print(f"wrote {written[0]}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "validate": _cmd_validate,
    "fit": _cmd_fit,
    "sweep": _cmd_sweep,
    "oracle": _cmd_oracle,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return USAGE_EXIT
    handler = _COMMANDS[args.command]
    try:
        return handler(args)
    except (ConfigError, CapsuleValidationError, CflError) as exc:
        output.print_err(f"configuration error: {exc}")
        return CONFIG_EXIT
    except SimulationFault as exc:
        output.print_err(f"runtime fault: {exc}")
        return FAULT_EXIT
    except ValueError as exc:
        output.print_err(f"configuration error: {exc}")
        return CONFIG_EXIT
    except OSError as exc:
        output.print_err(f"I/O error: {exc}")
        return FAULT_EXIT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
