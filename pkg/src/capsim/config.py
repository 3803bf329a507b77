"""Plain-text configuration files.

The format is line-oriented: ``[section]`` headers followed by
``key = value`` pairs, with ``#`` or ``;`` comments and blank lines
ignored. Sections:

``[capsule]``
    ``lambda`` (required): boundary mass-transfer coefficient, 1/um.
``[stratum]``
    One per stratum, innermost first. Required: ``thickness``,
    ``d_plus``, ``dr``, ``dt``. Optional: ``alpha`` (default 1),
    ``beta`` (default 0), ``c_init`` (default 0), ``label``, and
    ``partition`` (true marks a numerical partition of the same physical
    stratum as the previous section; it must repeat that section's
    physics and only vary the grid).
``[simulation]``
    Required: ``t_end``, ``output_every``. Optional: ``scheme``
    (conservative | paper), ``profile_every``, ``fictitious_max_ratio``.
``[erosion]`` (optional)
    Exactly one way to give the surface trace: ``samples_csv`` (path,
    relative to the config file), inline ``knots`` (``t:R`` pairs), or
    ``r_start`` plus ``phases`` (``t0:t1:v`` triplets).
``[fit]`` / ``[parameter]`` (optional)
    Calibration setup; see :class:`FitSettings`. ``[parameter]`` repeats
    per free parameter with ``path``, ``lower``, ``upper`` and optional
    ``log``, ``initial``.

Unknown sections or keys are hard errors carrying the line number.
``emit_config`` writes a canonical form that parses back to an equal
configuration.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .calibration import FreeParameter
from .erosion import ErosionSchedule, load_erosion_csv, schedule_from_phases
from .model import (
    CapsuleSpec,
    CapsuleValidationError,
    SimulationConfig,
    StratumSpec,
    validate_capsule,
)


class ConfigError(ValueError):
    """A configuration file problem, with line context where known."""


@dataclass(frozen=True)
class FitSettings:
    """Calibration block of a config file.

    ``initials`` aligns with ``parameters``; ``None`` entries start from
    the value already in the capsule. ``release_unit`` tells how to read
    the experimental release column: "ug" as mass, "fraction" as a
    fraction of the initial load.
    """

    parameters: tuple[FreeParameter, ...]
    initials: tuple[Optional[float], ...]
    mode: str = "absolute"
    release_unit: str = "ug"
    max_evaluations: int = 200
    seed: Optional[int] = None


@dataclass(frozen=True)
class ParsedConfig:
    simulation: SimulationConfig
    fit: Optional[FitSettings] = None


_SECTION_KEYS = {
    "capsule": {"lambda"},
    "stratum": {"thickness", "d_plus", "dr", "dt", "alpha", "beta",
                "c_init", "label", "partition"},
    "simulation": {"t_end", "output_every", "scheme", "profile_every",
                   "fictitious_max_ratio"},
    "erosion": {"samples_csv", "knots", "r_start", "phases"},
    "fit": {"mode", "release_unit", "max_evaluations", "seed"},
    "parameter": {"path", "lower", "upper", "log", "initial"},
}
class _Section:
    def __init__(self, name: str, line: int):
        self.name = name
        self.line = line
        self.items: dict[str, tuple[str, int]] = {}


def _tokenize(text: str) -> list[_Section]:
    sections: list[_Section] = []
    current: Optional[_Section] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in _SECTION_KEYS:
                raise ConfigError(f"line {lineno}: unknown section [{name}]")
            current = _Section(name, lineno)
            sections.append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in _SECTION_KEYS[current.name]:
            raise ConfigError(
                f"line {lineno}: unknown key {key!r} in [{current.name}]"
            )
        if key in current.items:
            raise ConfigError(
                f"line {lineno}: duplicate key {key!r} in [{current.name}]"
            )
        current.items[key] = (value, lineno)
    return sections


def _want_float(sec: _Section, key: str) -> Optional[float]:
    if key not in sec.items:
        return None
    value, lineno = sec.items[key]
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} must be a number, got {value!r}") from None


def _need_float(sec: _Section, key: str) -> float:
    v = _want_float(sec, key)
    if v is None:
        raise ConfigError(
            f"line {sec.line}: [{sec.name}] section is missing required key {key!r}"
        )
    return v


def _want_int(sec: _Section, key: str) -> Optional[int]:
    if key not in sec.items:
        return None
    value, lineno = sec.items[key]
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} must be an integer, got {value!r}") from None


def _want_bool(sec: _Section, key: str, default: bool = False) -> bool:
    if key not in sec.items:
        return default
    value, lineno = sec.items[key]
    lowered = value.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"line {lineno}: {key} must be true or false, got {value!r}")


def _want_str(sec: _Section, key: str, default: str = "") -> str:
    if key not in sec.items:
        return default
    return sec.items[key][0]


def _parse_pairs(value: str, lineno: int, arity: int, what: str) -> list[tuple[float, ...]]:
    out = []
    for token in value.replace(",", " ").split():
        parts = token.split(":")
        if len(parts) != arity:
            raise ConfigError(
                f"line {lineno}: {what} entries need {arity} colon-separated "
                f"numbers, got {token!r}"
            )
        try:
            out.append(tuple(float(p) for p in parts))
        except ValueError:
            raise ConfigError(f"line {lineno}: bad number in {token!r}") from None
    if not out:
        raise ConfigError(f"line {lineno}: empty {what} list")
    return out


def _build_erosion(sec: _Section, base_dir: Path) -> ErosionSchedule:
    given = [k for k in ("samples_csv", "knots", "phases") if k in sec.items]
    if len(given) != 1:
        raise ConfigError(
            f"line {sec.line}: [erosion] needs exactly one of samples_csv, "
            f"knots, or phases (with r_start)"
        )
    try:
        if "samples_csv" in sec.items:
            rel, lineno = sec.items["samples_csv"]
            path = base_dir / rel
            if not path.exists():
                raise ConfigError(f"line {lineno}: erosion CSV not found: {path}")
            return load_erosion_csv(path)
        if "knots" in sec.items:
            value, lineno = sec.items["knots"]
            pairs = _parse_pairs(value, lineno, 2, "knots")
            return ErosionSchedule(
                tuple(p[0] for p in pairs), tuple(p[1] for p in pairs)
            )
        value, lineno = sec.items["phases"]
        r_start = _need_float(sec, "r_start")
        triplets = _parse_pairs(value, lineno, 3, "phases")
        return schedule_from_phases(r_start, triplets)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[erosion] section: {exc}") from None


def _build_stratum(sec: _Section) -> StratumSpec:
    try:
        return StratumSpec(
            thickness=_need_float(sec, "thickness"),
            d_plus=_need_float(sec, "d_plus"),
            dr=_need_float(sec, "dr"),
            dt=_need_float(sec, "dt"),
            alpha=_want_float(sec, "alpha") if "alpha" in sec.items else 1.0,
            beta=_want_float(sec, "beta") if "beta" in sec.items else 0.0,
            c_init=_want_float(sec, "c_init") if "c_init" in sec.items else 0.0,
            fictitious=_want_bool(sec, "partition"),
            label=_want_str(sec, "label"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"line {sec.line}: [stratum] {exc}") from None


def _build_fit(fit_sec: Optional[_Section],
               param_secs: list[_Section]) -> Optional[FitSettings]:
    if fit_sec is None and not param_secs:
        return None
    parameters = []
    initials = []
    for sec in param_secs:
        path_str = _want_str(sec, "path")
        if not path_str:
            raise ConfigError(f"line {sec.line}: [parameter] needs a path")
        try:
            p = FreeParameter(
                path=path_str,
                lower=_need_float(sec, "lower"),
                upper=_need_float(sec, "upper"),
                log=_want_bool(sec, "log"),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {sec.line}: [parameter] {exc}") from None
        parameters.append(p)
        initials.append(_want_float(sec, "initial"))
    mode = "absolute"
    unit = "ug"
    max_evals = 200
    seed = None
    if fit_sec is not None:
        mode = _want_str(fit_sec, "mode", "absolute")
        if mode not in ("absolute", "relative"):
            raise ConfigError(
                f"line {fit_sec.line}: fit mode must be absolute or relative"
            )
        unit = _want_str(fit_sec, "release_unit", "ug")
        if unit not in ("ug", "fraction"):
            raise ConfigError(
                f"line {fit_sec.line}: release_unit must be ug or fraction"
            )
        max_evals = _want_int(fit_sec, "max_evaluations")
        max_evals = 200 if max_evals is None else max_evals
        if max_evals < 1:
            raise ConfigError(f"line {fit_sec.line}: max_evaluations must be >= 1")
        seed = _want_int(fit_sec, "seed")
    return FitSettings(
        parameters=tuple(parameters),
        initials=tuple(initials),
        mode=mode,
        release_unit=unit,
        max_evaluations=max_evals,
        seed=seed,
    )


def _locate(msg: str, strata: list[StratumSpec], secs: list[_Section],
            cap_sec: _Section) -> str:
    """Prefix a capsule validation message with the line that caused it."""
    for i, spec in enumerate(strata):
        if msg.startswith(spec.name(i) + ":"):
            return f"line {secs[i].line}: [stratum] {msg}"
    if msg.startswith("lambda"):
        lineno = cap_sec.items["lambda"][1]
        return f"line {lineno}: {msg}"
    return msg


def parse_document(text: str, base_dir: Union[str, Path, None] = None) -> ParsedConfig:
    """Parse a full config file into simulation plus optional fit setup."""
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    sections = _tokenize(text)
    by_name: dict[str, _Section] = {}
    strata_secs: list[_Section] = []
    param_secs: list[_Section] = []
    for sec in sections:
        if sec.name == "stratum":
            strata_secs.append(sec)
        elif sec.name == "parameter":
            param_secs.append(sec)
        else:
            if sec.name in by_name:
                raise ConfigError(
                    f"line {sec.line}: duplicate [{sec.name}] section"
                )
            by_name[sec.name] = sec

    if "capsule" not in by_name:
        raise ConfigError("missing capsule: no [capsule] section")
    if not strata_secs:
        raise ConfigError("missing capsule: no [stratum] sections")
    if "simulation" not in by_name:
        raise ConfigError("missing [simulation] section")

    cap_sec = by_name["capsule"]
    lam = _need_float(cap_sec, "lambda")
    strata = [_build_stratum(sec) for sec in strata_secs]
    try:
        capsule = CapsuleSpec(tuple(strata), lam)
        validate_capsule(capsule)
    except CapsuleValidationError as exc:
        raise ConfigError(
            "; ".join(_locate(msg, strata, strata_secs, cap_sec)
                      for msg in exc.errors)
        ) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    sim_sec = by_name["simulation"]
    scheme = _want_str(sim_sec, "scheme", "conservative")
    erosion = None
    if "erosion" in by_name:
        erosion = _build_erosion(by_name["erosion"], base_dir)
    try:
        config = SimulationConfig(
            capsule=capsule,
            t_end=_need_float(sim_sec, "t_end"),
            output_every=_need_float(sim_sec, "output_every"),
            erosion=erosion,
            scheme=scheme,
            fictitious_max_ratio=_want_float(sim_sec, "fictitious_max_ratio"),
            profile_every=_want_float(sim_sec, "profile_every") or 0.0,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[simulation] section: {exc}") from None

    fit = _build_fit(by_name.get("fit"), param_secs)
    return ParsedConfig(simulation=config, fit=fit)


def parse_config(text: str, base_dir: Union[str, Path, None] = None) -> SimulationConfig:
    """Parse config text; errors carry line numbers. See module docstring."""
    return parse_document(text, base_dir).simulation


def load_config(path: Union[str, Path]) -> ParsedConfig:
    """Read and parse a config file, resolving CSV paths against it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        return parse_document(text, base_dir=path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_config(config: SimulationConfig, fit: Optional[FitSettings] = None) -> str:
    """Canonical text form; parsing it back yields an equal configuration.

    Erosion schedules are always written as inline knots, whatever their
    origin, so emitted files stand alone.
    """
    lines = ["[capsule]", f"lambda = {_fmt(config.capsule.lam)}", ""]
    for s in config.capsule.strata:
        lines.append("[stratum]")
        if s.label:
            lines.append(f"label = {s.label}")
        lines.append(f"thickness = {_fmt(s.thickness)}")
        lines.append(f"d_plus = {_fmt(s.d_plus)}")
        lines.append(f"alpha = {_fmt(s.alpha)}")
        lines.append(f"beta = {_fmt(s.beta)}")
        lines.append(f"c_init = {_fmt(s.c_init)}")
        if s.fictitious:
            lines.append("partition = true")
        lines.append(f"dr = {_fmt(s.dr)}")
        lines.append(f"dt = {_fmt(s.dt)}")
        lines.append("")
    lines.append("[simulation]")
    lines.append(f"t_end = {_fmt(config.t_end)}")
    lines.append(f"output_every = {_fmt(config.output_every)}")
    lines.append(f"scheme = {config.scheme}")
    if config.profile_every:
        lines.append(f"profile_every = {_fmt(config.profile_every)}")
    if config.fictitious_max_ratio is not None:
        lines.append(f"fictitious_max_ratio = {_fmt(config.fictitious_max_ratio)}")
    lines.append("")
    if config.erosion is not None:
        knots = " ".join(
            f"{_fmt(t)}:{_fmt(r)}"
            for t, r in zip(config.erosion.times, config.erosion.radii)
        )
        lines.append("[erosion]")
        lines.append(f"knots = {knots}")
        lines.append("")
    if fit is not None:
        lines.append("[fit]")
        lines.append(f"mode = {fit.mode}")
        lines.append(f"release_unit = {fit.release_unit}")
        lines.append(f"max_evaluations = {fit.max_evaluations}")
        if fit.seed is not None:
            lines.append(f"seed = {fit.seed}")
        lines.append("")
        for p, init in zip(fit.parameters, fit.initials):
            lines.append("[parameter]")
            lines.append(f"path = {p.path}")
            lines.append(f"lower = {_fmt(p.lower)}")
            lines.append(f"upper = {_fmt(p.upper)}")
            lines.append(f"log = {'true' if p.log else 'false'}")
            if init is not None:
                lines.append(f"initial = {_fmt(init)}")
            lines.append("")
    return "\n".join(lines).rstrip() + "\n"
