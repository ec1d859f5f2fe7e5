"""Scenario files: one flat ``[scenario]`` section of unit-suffixed keys.

Example::

    [scenario]
    kind = phase_locked
    t_d_us = 5
    t_r_us = 10
    area_d = 0.5pi
    rabi_mhz = 5
    gamma13_khz = 10

Areas accept pi-literals (``pi``, ``3pi``, ``0.5pi``, ``pi/2``) or plain radians.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .analysis import Experiment
from .core import RelaxationParams, SequenceKind, gaussian_grid
from .ensemble import Sampling
from .protocol import ProtocolParams

SECTION = "scenario"


class ConfigError(ValueError):
    """Malformed scenario; ``key`` names the offending entry when there is one."""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


_PI_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)?\s*\*?\s*pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$", re.I)


def parse_angle(text: str) -> float:
    """'3pi' -> 3*pi, '0.5pi' -> pi/2, 'pi/2' -> pi/2, '1.25' -> 1.25 rad."""
    m = _PI_RE.match(text)
    if m:
        coef = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return coef * math.pi / den
    return float(text)


def _vector(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.replace(",", " ").split()]
    if len(parts) != 3:
        raise ValueError("expected three components")
    norm = math.sqrt(sum(x * x for x in parts))
    if norm == 0:
        raise ValueError("zero vector")
    return tuple(x / norm for x in parts)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default); defaults follow the reference numerical experiment
KEYS = {
    "kind": (str, "phase_locked"),
    "name": (str, None),
    "t_d_us": (float, 5.0),
    "t_r_us": (float, 10.0),
    "t_b1_us": (float, 10.1),
    "t_b2_us": (float, 55.0),
    "t_end_us": (float, None),
    "area_d": (parse_angle, math.pi / 2),
    "area_r": (parse_angle, math.pi),
    "area_b1": (parse_angle, math.pi),
    "area_b2": (parse_angle, 3 * math.pi),
    "rabi_mhz": (float, 5.0),
    "grid_fwhm_mhz": (float, 0.68),
    "grid_spacing_mhz": (float, 0.01),
    "grid_count": (int, 161),
    "gamma_pop31_khz": (float, 5.0),
    "gamma_pop32_khz": (float, 5.0),
    "gamma_pop21_khz": (float, 0.0),
    "gamma13_khz": (float, 10.0),
    "gamma23_khz": (float, 10.0),
    "gamma12_khz": (float, 0.0),
    "dt_pulse_us": (float, 1e-3),
    "dt_sample_us": (float, 0.01),
    "reference_t_r_us": (float, None),
    "k_d": (_vector, None),
    "k_b1": (_vector, None),
    "k_b2": (_vector, None),
    "omega_d_mhz": (float, None),
    "omega_b1_mhz": (float, None),
    "omega_b2_mhz": (float, None),
    "populations": (_bool, False),
    "svg": (_bool, False),
}


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    experiment: Experiment
    raw: dict[str, str] = field(default_factory=dict)
    populations: bool = False
    svg: bool = False


def parse_scenario(text: str, name: str = "scenario") -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str  # keep key case so unknown keys are reported verbatim
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable scenario: {exc}") from exc
    sections = cp.sections()
    if sections != [SECTION]:
        raise ConfigError(f"expected exactly one [{SECTION}] section, found {sections or 'none'}")
    raw = dict(cp[SECTION])
    unknown = [k for k in raw if k not in KEYS]
    if unknown:
        raise ConfigError("unknown key", unknown[0])
    vals = {}
    for key, (conv, default) in KEYS.items():
        if key in raw:
            try:
                vals[key] = conv(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value {raw[key]!r} ({exc})", key) from exc
        else:
            vals[key] = default
    try:
        kind = SequenceKind(vals["kind"])
    except ValueError:
        raise ConfigError(f"must be one of {[k.value for k in SequenceKind]}", "kind") from None

    def build(key, fn):
        try:
            return fn()
        except ValueError as exc:
            raise ConfigError(str(exc), key) from exc

    params = build("rabi_mhz", lambda: ProtocolParams(
        T_D=vals["t_d_us"], T_R=vals["t_r_us"],
        T_B1=vals["t_b1_us"] if kind is SequenceKind.PHASE_LOCKED else None,
        T_B2=vals["t_b2_us"] if kind is SequenceKind.PHASE_LOCKED else None,
        area_D=vals["area_d"], area_R=vals["area_r"], area_B1=vals["area_b1"], area_B2=vals["area_b2"],
        rabi_freq=vals["rabi_mhz"],
        k_D=vals["k_d"], k_B1=vals["k_b1"], k_B2=vals["k_b2"],
        omega_D=vals["omega_d_mhz"], omega_B1=vals["omega_b1_mhz"], omega_B2=vals["omega_b2_mhz"],
        t_end=vals["t_end_us"],
    ))
    grid = build("grid_count", lambda: gaussian_grid(vals["grid_fwhm_mhz"], vals["grid_spacing_mhz"], vals["grid_count"]))
    relax = build("gamma13_khz", lambda: RelaxationParams(
        vals["gamma_pop31_khz"], vals["gamma_pop32_khz"], vals["gamma_pop21_khz"],
        vals["gamma13_khz"], vals["gamma23_khz"], vals["gamma12_khz"],
    ))
    for key in ("dt_pulse_us", "dt_sample_us"):
        if not vals[key] > 0:
            raise ConfigError("must be > 0", key)
    sampling = Sampling(vals["dt_pulse_us"], vals["dt_sample_us"])
    exp = Experiment(kind, params, grid, relax, sampling, vals["reference_t_r_us"])
    return ScenarioConfig(vals["name"] or name, exp, raw, vals["populations"], vals["svg"])


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Read a scenario file; a bare name like ``fig1c`` resolves to the bundled set."""
    p = Path(path)
    if not p.exists():
        bundled = bundled_scenarios()
        key = p.name[: -len(".scenario")] if p.name.endswith(".scenario") else p.name
        if key in bundled:
            p = bundled[key]
        else:
            raise ConfigError(f"cannot read scenario {str(path)!r}")
    try:
        text = Path(p).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {str(path)!r}: {exc}") from exc
    return parse_scenario(text, Path(p).stem)


def bundled_scenarios() -> dict[str, Path]:
    root = resources.files(__package__) / "scenarios"
    return {Path(str(f)).stem: Path(str(f)) for f in root.iterdir() if str(f).endswith(".scenario")}
