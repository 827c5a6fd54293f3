"""Scenario files: flat INI sections with unit-tagged values.

The reader is deliberately hand-rolled so that every complaint can name
the offending key and line; stock INI parsers drop that information.
Values carry their unit in the string ("1500 as", "65.3 eV", "20 nm",
"1e12 W/cm2") and are converted to atomic units here, so everything
downstream is unit-free.

Sections are independent: [pulses] and [scan] drive both engines,
[model] and [tdse] configure one engine each, [resonances] configures
the pole search, [fit] and [compare] configure the analysis commands.
A scenario file only needs the sections its command uses.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import EnergyWindow
from .pulses import Pulse
from .units import as_to_au, ev_to_au, fs_to_au, photon_energy_from_wavelength

__all__ = [
    "ConfigError",
    "Scenario",
    "PulsePair",
    "ScanSettings",
    "ModelSettings",
    "TdseSettings",
    "EcsSettings",
    "FitSettings",
    "CompareSettings",
    "load_scenario",
    "parse_delays",
    "parse_window",
]


class ConfigError(ValueError):
    """Malformed scenario file; the message names the key and line."""


def _parse_time(text: str, key: str, line: int) -> float:
    value, unit = _split_quantity(text, key, line)
    if unit == "as":
        return as_to_au(value)
    if unit == "fs":
        return fs_to_au(value)
    if unit == "au":
        return value
    raise ConfigError(
        f"line {line}: key '{key}' needs a time unit (as, fs, au), got {text!r}"
    )


def _parse_energy(text: str, key: str, line: int) -> float:
    value, unit = _split_quantity(text, key, line)
    if unit == "eV":
        return ev_to_au(value)
    if unit == "nm":
        return ev_to_au(photon_energy_from_wavelength(value))
    if unit == "au":
        return value
    raise ConfigError(
        f"line {line}: key '{key}' needs an energy unit (eV, nm, au), got {text!r}"
    )


def _parse_intensity(text: str, key: str, line: int) -> float:
    value, unit = _split_quantity(text, key, line)
    if unit == "W/cm2":
        return value
    raise ConfigError(
        f"line {line}: key '{key}' needs W/cm2, got {text!r}"
    )


def _parse_float(text: str, key: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(
            f"line {line}: key '{key}' needs a plain number, got {text!r}"
        ) from None


def _parse_int(text: str, key: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(
            f"line {line}: key '{key}' needs an integer, got {text!r}"
        ) from None


def _parse_string(text: str, key: str, line: int) -> str:
    return text


def _parse_complex_au(text: str, key: str, line: int) -> complex:
    parts = text.split()
    if len(parts) == 3 and parts[2] == "au":
        parts = parts[:2]
    if len(parts) != 2:
        raise ConfigError(
            f"line {line}: key '{key}' needs 'RE IM [au]', got {text!r}"
        )
    try:
        return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        raise ConfigError(
            f"line {line}: key '{key}' needs 'RE IM [au]', got {text!r}"
        ) from None


def _split_quantity(text: str, key: str, line: int) -> tuple[float, str]:
    parts = text.split()
    if len(parts) != 2:
        raise ConfigError(
            f"line {line}: key '{key}' needs 'VALUE UNIT', got {text!r}"
        )
    try:
        value = float(parts[0])
    except ValueError:
        raise ConfigError(
            f"line {line}: key '{key}': {parts[0]!r} is not a number"
        ) from None
    return value, parts[1]


def parse_delays(text: str, key: str = "delays", line: int = 0) -> np.ndarray:
    """Inclusive delay range 'LO:HI:STEP UNIT' in a.u.; '' is empty.

    '1000:3000:10 as' gives 201 points; the endpoint is kept whenever
    (hi - lo) is an integer number of steps to within 1e-9 steps.
    """
    text = text.strip()
    if not text:
        return np.array([], dtype=float)
    parts = text.split()
    if len(parts) != 2 or parts[0].count(":") != 2:
        raise ConfigError(
            f"line {line}: key '{key}' needs 'LO:HI:STEP UNIT', got {text!r}"
        )
    try:
        lo, hi, step = (float(p) for p in parts[0].split(":"))
    except ValueError:
        raise ConfigError(
            f"line {line}: key '{key}': bad range {parts[0]!r}"
        ) from None
    if step <= 0.0 or hi < lo:
        raise ConfigError(
            f"line {line}: key '{key}': need lo <= hi and step > 0, got {text!r}"
        )
    scale = {"as": as_to_au(1.0), "fs": fs_to_au(1.0), "au": 1.0}.get(parts[1])
    if scale is None:
        raise ConfigError(
            f"line {line}: key '{key}' needs a time unit (as, fs, au), got {text!r}"
        )
    n_steps = int(np.floor((hi - lo) / step + 1e-9))
    return (lo + step * np.arange(n_steps + 1)) * scale


def parse_window(text: str, key: str = "window", line: int = 0):
    """'auto' or an explicit window 'LO HI UNIT' (eV or au)."""
    text = text.strip()
    if text == "auto":
        return "auto"
    parts = text.split()
    if len(parts) != 3:
        raise ConfigError(
            f"line {line}: key '{key}' needs 'auto' or 'LO HI UNIT', got {text!r}"
        )
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(
            f"line {line}: key '{key}': bad bounds in {text!r}"
        ) from None
    if parts[2] == "eV":
        lo, hi = ev_to_au(lo), ev_to_au(hi)
    elif parts[2] != "au":
        raise ConfigError(
            f"line {line}: key '{key}' needs eV or au bounds, got {text!r}"
        )
    try:
        return EnergyWindow(lo, hi)
    except ValueError as exc:
        raise ConfigError(f"line {line}: key '{key}': {exc}") from None


@dataclass(frozen=True)
class PulsePair:
    pump: Pulse
    probe: Pulse


@dataclass(frozen=True)
class ScanSettings:
    delays: np.ndarray
    window: EnergyWindow | str
    seed: int


@dataclass(frozen=True)
class ModelSettings:
    resonances: str
    i1: float
    i2: float
    gamma_strength: float
    gamma_width: float | None
    total_width: float | None
    sharing_width: float
    excitation: dict[str, complex]
    n_bins: int
    e_max: float


@dataclass(frozen=True)
class TdseSettings:
    extent: float
    points: int
    dt: float
    absorber_start: float
    absorber_strength: float
    di_radius: float
    di_ramp: float
    settle: float
    pump_clear: float
    gauge: str


@dataclass(frozen=True)
class EcsSettings:
    extent: float
    points: int
    radius: float
    angle: float
    angle_step: float
    sigma: complex
    count: int
    ground_sigma: complex
    stability_tol: float


@dataclass(frozen=True)
class FitSettings:
    input: str
    column: str
    components: int


@dataclass(frozen=True)
class CompareSettings:
    scan: str
    resonances: str


@dataclass(frozen=True)
class Scenario:
    """Parsed scenario: only the sections present in the file are set."""

    path: str
    sha256: str
    pulses: PulsePair | None = None
    scan: ScanSettings | None = None
    model: ModelSettings | None = None
    tdse: TdseSettings | None = None
    resonances: EcsSettings | None = None
    fit: FitSettings | None = None
    compare: CompareSettings | None = None

    def require(self, *names: str):
        for name in names:
            if getattr(self, name) is None:
                raise ConfigError(
                    f"{self.path}: this command needs a [{name}] section"
                )


# each section: key -> (parser, required, default); a parser of None
# marks a prefix family handled separately
_PULSE_KEYS = {
    "pump_duration": (_parse_time, True, None),
    "pump_energy": (_parse_energy, True, None),
    "pump_intensity": (_parse_intensity, False, 1.0e12),
    "pump_cep": (_parse_float, False, 0.0),
    "probe_duration": (_parse_time, False, None),
    "probe_energy": (_parse_energy, False, None),
    "probe_intensity": (_parse_intensity, False, None),
    "probe_cep": (_parse_float, False, None),
}
_SCAN_KEYS = {
    "delays": (parse_delays, True, None),
    "window": (parse_window, True, None),
    "seed": (_parse_int, False, 0),
}
_MODEL_KEYS = {
    "resonances": (_parse_string, True, None),
    "i1": (_parse_energy, True, None),
    "i2": (_parse_energy, True, None),
    "gamma_strength": (_parse_float, False, 1.0),
    "gamma_width": (_parse_energy, False, None),
    "total_width": (_parse_energy, False, None),
    "sharing_width": (_parse_energy, False, 0.5),
    "n_bins": (_parse_int, False, 512),
    "e_max": (_parse_energy, False, 3.0),
}
_TDSE_KEYS = {
    "extent": (_parse_float, True, None),
    "points": (_parse_int, True, None),
    "dt": (_parse_time, True, None),
    "absorber_start": (_parse_float, True, None),
    "absorber_strength": (_parse_float, False, 0.4),
    "di_radius": (_parse_float, True, None),
    "di_ramp": (_parse_float, False, 4.0),
    "settle": (_parse_time, False, 30.0),
    "pump_clear": (_parse_time, False, 0.0),
    "gauge": (_parse_string, False, "length"),
}
_ECS_KEYS = {
    "extent": (_parse_float, True, None),
    "points": (_parse_int, True, None),
    "radius": (_parse_float, True, None),
    "angle": (_parse_float, False, 0.4),
    "angle_step": (_parse_float, False, 0.1),
    "sigma": (_parse_complex_au, True, None),
    "count": (_parse_int, False, 10),
    "ground_sigma": (_parse_complex_au, True, None),
    "stability_tol": (_parse_float, False, 1e-4),
}
_FIT_KEYS = {
    "input": (_parse_string, True, None),
    "column": (_parse_string, False, "p_beta"),
    "components": (_parse_int, True, None),
}
_COMPARE_KEYS = {
    "scan": (_parse_string, True, None),
    "resonances": (_parse_string, True, None),
}
_SCHEMAS = {
    "pulses": _PULSE_KEYS,
    "scan": _SCAN_KEYS,
    "model": _MODEL_KEYS,
    "tdse": _TDSE_KEYS,
    "resonances": _ECS_KEYS,
    "fit": _FIT_KEYS,
    "compare": _COMPARE_KEYS,
}


def _read_sections(text: str, path: str):
    """INI text -> {section: {key: (value, line)}} with line tracking."""
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    section = None
    header_lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(f"{path}: line {lineno}: malformed section header")
            name = stripped[1:-1].strip()
            if name not in _SCHEMAS:
                raise ConfigError(
                    f"{path}: line {lineno}: unknown section [{name}]"
                )
            if name in sections:
                raise ConfigError(
                    f"{path}: line {lineno}: duplicate section [{name}] "
                    f"(first at line {header_lines[name]})"
                )
            sections[name] = {}
            header_lines[name] = lineno
            section = name
            continue
        if section is None:
            raise ConfigError(
                f"{path}: line {lineno}: key outside of any section"
            )
        if "=" not in stripped:
            raise ConfigError(
                f"{path}: line {lineno}: expected 'key = value'"
            )
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{path}: line {lineno}: empty key")
        if key in sections[section]:
            first = sections[section][key][1]
            raise ConfigError(
                f"{path}: line {lineno}: duplicate key '{key}' in "
                f"[{section}] (first at line {first})"
            )
        sections[section][key] = (value, lineno)
    return sections, header_lines


def _parse_section(name, entries, path, header_line):
    schema = _SCHEMAS[name]
    out = {}
    extra = {}
    for key, (value, line) in entries.items():
        if key in schema:
            parser = schema[key][0]
            out[key] = parser(value, key, line)
        elif name == "model" and key.startswith("excitation_"):
            extra[key.removeprefix("excitation_")] = _parse_complex_au(
                value, key, line
            )
        else:
            raise ConfigError(
                f"{path}: line {line}: unknown key '{key}' in [{name}]"
            )
    for key, (parser, required, default) in schema.items():
        if key in out:
            continue
        if required:
            raise ConfigError(
                f"{path}: missing required key '{key}' in [{name}] "
                f"(section at line {header_line})"
            )
        out[key] = default
    return out, extra


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from None
    digest = hashlib.sha256(text.encode()).hexdigest()
    sections, header_lines = _read_sections(text, str(path))

    parts: dict[str, object] = {}
    for name, entries in sections.items():
        parsed, extra = _parse_section(name, entries, str(path), header_lines[name])
        if name == "pulses":
            pump = Pulse(
                duration=parsed["pump_duration"],
                energy=parsed["pump_energy"],
                intensity=parsed["pump_intensity"],
                cep=parsed["pump_cep"],
            )
            probe = Pulse(
                duration=parsed["probe_duration"] or parsed["pump_duration"],
                energy=parsed["probe_energy"] or parsed["pump_energy"],
                intensity=(
                    parsed["probe_intensity"]
                    if parsed["probe_intensity"] is not None
                    else parsed["pump_intensity"]
                ),
                cep=(
                    parsed["probe_cep"]
                    if parsed["probe_cep"] is not None
                    else parsed["pump_cep"]
                ),
            )
            parts["pulses"] = PulsePair(pump=pump, probe=probe)
        elif name == "scan":
            parts["scan"] = ScanSettings(
                delays=parsed["delays"], window=parsed["window"],
                seed=parsed["seed"],
            )
        elif name == "model":
            parts["model"] = ModelSettings(
                resonances=parsed["resonances"],
                i1=parsed["i1"],
                i2=parsed["i2"],
                gamma_strength=parsed["gamma_strength"],
                gamma_width=parsed["gamma_width"],
                total_width=parsed["total_width"],
                sharing_width=parsed["sharing_width"],
                excitation=extra,
                n_bins=parsed["n_bins"],
                e_max=parsed["e_max"],
            )
        elif name == "tdse":
            if parsed["gauge"] not in ("length", "velocity"):
                line = entries["gauge"][1]
                raise ConfigError(
                    f"{path}: line {line}: key 'gauge' must be length or "
                    f"velocity, got {parsed['gauge']!r}"
                )
            parts["tdse"] = TdseSettings(**parsed)
        elif name == "resonances":
            parts["resonances"] = EcsSettings(**parsed)
        elif name == "fit":
            if parsed["column"] not in ("a_mod", "p_beta", "yield_windowed"):
                line = entries["column"][1]
                raise ConfigError(
                    f"{path}: line {line}: key 'column' must be one of "
                    f"a_mod, p_beta, yield_windowed"
                )
            parts["fit"] = FitSettings(**parsed)
        elif name == "compare":
            parts["compare"] = CompareSettings(**parsed)
    return Scenario(path=str(path), sha256=digest, **parts)
