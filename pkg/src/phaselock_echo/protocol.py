"""Protocol construction and the algebraic laws of the phase-locked echo.

Covers the echo-time law, the pulse-area conditions for a maximal echo,
and four-wave-mixing phase matching of the echo direction/frequency.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import (
    TWO_PI,
    Pulse,
    PulseSequence,
    SequenceKind,
    Transition,
    validate_sequence,
)

DEFAULT_MARGIN = 5.0  # us of free evolution kept after the predicted echo
DEFAULT_AREA_TOL = math.pi / 50


class ProtocolError(ValueError):
    """Protocol parameters violate an ordering or locking rule; ``code`` names it."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


Vector = tuple[float, float, float]


@dataclass(frozen=True)
class ProtocolParams:
    """Start times (us), areas (rad), shared Rabi frequency (MHz) and optional geometry."""

    T_D: float = 5.0
    T_R: float = 10.0
    T_B1: Optional[float] = 10.1
    T_B2: Optional[float] = 55.0
    area_D: float = math.pi / 2
    area_R: float = math.pi
    area_B1: float = math.pi
    area_B2: float = 3 * math.pi
    rabi_freq: float = 5.0
    k_D: Optional[Vector] = None
    k_B1: Optional[Vector] = None
    k_B2: Optional[Vector] = None
    omega_D: Optional[float] = None
    omega_B1: Optional[float] = None
    omega_B2: Optional[float] = None
    t_end: Optional[float] = None

    def __post_init__(self):
        if self.rabi_freq <= 0:
            raise ValueError("rabi_freq must be > 0")
        for name in ("area_D", "area_R", "area_B1", "area_B2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    def duration(self, area: float) -> float:
        return area / (TWO_PI * self.rabi_freq)

    def with_(self, **changes) -> "ProtocolParams":
        return replace(self, **changes)


def _pulse(params: ProtocolParams, label, transition, t, area, k=None) -> Pulse:
    return Pulse(transition, t, params.duration(area), params.rabi_freq, 0.0, k, label)


def two_pulse_echo_time(T_D: float, T_R: float) -> float:
    return 2.0 * T_R - T_D


def build_two_pulse(params: ProtocolParams) -> PulseSequence:
    """Conventional echo: D then R on the data transition."""
    if not params.T_D < params.T_R:
        raise ProtocolError("ORDER", f"T_D={params.T_D} must precede T_R={params.T_R}")
    d = _pulse(params, "D", Transition.T13, params.T_D, params.area_D, params.k_D)
    r = _pulse(params, "R", Transition.T13, params.T_R, params.area_R)
    t_end = params.t_end
    if t_end is None:
        t_end = max(two_pulse_echo_time(params.T_D, params.T_R), r.t_end) + DEFAULT_MARGIN
    return PulseSequence((d, r), t_end)


def build_phase_locked(params: ProtocolParams) -> PulseSequence:
    """D, R on T13 and the lock/unlock pair B1, B2 on T23.

    Raises ProtocolError with the first violation code (e.g. LOCK_TOO_LATE).
    """
    if params.T_B1 is None or params.T_B2 is None:
        raise ProtocolError("MISSING_PULSE", "phase-locked protocol needs T_B1 and T_B2")
    pulses = (
        _pulse(params, "D", Transition.T13, params.T_D, params.area_D, params.k_D),
        _pulse(params, "R", Transition.T13, params.T_R, params.area_R),
        _pulse(params, "B1", Transition.T23, params.T_B1, params.area_B1, params.k_B1),
        _pulse(params, "B2", Transition.T23, params.T_B2, params.area_B2, params.k_B2),
    )
    # report ordering/locking problems before the type-level overlap checks fire
    order_ok = params.T_D < params.T_R < params.T_B1 < params.T_B2
    last_end = max(p.t_end for p in pulses)
    t_end = params.t_end
    if t_end is None:
        t_end = last_end + DEFAULT_MARGIN
        if order_ok:
            t_end = max(predict_echo_time(params.T_D, params.T_R, params.T_B1, params.T_B2), last_end) + DEFAULT_MARGIN
    try:
        seq = PulseSequence(tuple(sorted(pulses, key=lambda p: p.t_start)), max(t_end, last_end))
    except ValueError as exc:
        if not order_ok:
            raise ProtocolError("ORDER", "need T_D < T_R < T_B1 < T_B2") from exc
        raise ProtocolError("OVERLAP", str(exc)) from exc
    report = validate_sequence(seq, SequenceKind.PHASE_LOCKED)
    if not report.ok:
        v = report.violations[0]
        raise ProtocolError(v.code, v.message)
    return seq


def build_sequence(params: ProtocolParams, kind: SequenceKind | str) -> PulseSequence:
    kind = SequenceKind(kind)
    if kind is SequenceKind.TWO_PULSE:
        return build_two_pulse(params)
    return build_phase_locked(params)


def predict_echo_time(T_D: float, T_R: float, T_B1: float, T_B2: float) -> float:
    """Echo time of the locked protocol: T_B2 + (T_R - T_D) - (T_B1 - T_R).

    ``T_B1 == T_B2 == T_R`` is accepted as the degenerate two-pulse limit.
    """
    degenerate = T_B1 == T_R and T_B2 == T_R
    if not (T_D < T_R and (degenerate or T_R < T_B1 < T_B2)):
        raise ValueError(f"need T_D < T_R < T_B1 < T_B2, got {T_D}, {T_R}, {T_B1}, {T_B2}")
    return T_B2 + (T_R - T_D) - (T_B1 - T_R)


# ---------------------------------------------------------------------------
# pulse-area conditions
# ---------------------------------------------------------------------------


class AreaClass(str, enum.Enum):
    MAXIMAL = "MAXIMAL"
    NULL = "NULL"
    INVERTED = "INVERTED"
    OFF_CONDITION = "OFF_CONDITION"


@dataclass(frozen=True)
class AreaClassification:
    kind: AreaClass
    rule: Optional[str]  # "b1_4n-3" / "b1_4n-1" for MAXIMAL, "null" / "inverted" otherwise
    n: Optional[int] = None  # integer of the B1 clause
    m: Optional[int] = None  # integer of the B2 clause
    sum_is_4n_pi: bool = False


def _odd_multiple(area: float, residue: int, tol: float) -> Optional[int]:
    """n >= 1 with area == (4n - residue)*pi within tol, else None (residue 1 or 3)."""
    n = round((area / math.pi + residue) / 4)
    if n >= 1 and abs(area - (4 * n - residue) * math.pi) <= tol:
        return n
    return None


def _multiple_of(area: float, unit: float, tol: float) -> Optional[int]:
    k = round(area / unit)
    if k >= 1 and abs(area - k * unit) <= tol:
        return k
    return None


def classify_areas(phi_R: float, phi_B1: float, phi_B2: float, tol: float = DEFAULT_AREA_TOL) -> AreaClassification:
    """Sort (R, B1, B2) areas into MAXIMAL / NULL / INVERTED / OFF_CONDITION.

    MAXIMAL needs R an odd multiple of pi and either B1 = (4n-3)pi with
    B2 = (4m-1)pi, or B1 = (4n-1)pi with B2 = (4m-3)pi.  The clauses use
    independent integers n and m.
    """
    if min(phi_R, phi_B1, phi_B2) < 0 or tol <= 0:
        raise ValueError("areas must be >= 0 and tol > 0")
    sum_ok = _multiple_of(phi_B1 + phi_B2, 4 * math.pi, tol) is not None
    r_ok = _odd_multiple(phi_R, 1, tol) is not None or _odd_multiple(phi_R, 3, tol) is not None
    if r_ok:
        n, m = _odd_multiple(phi_B1, 3, tol), _odd_multiple(phi_B2, 1, tol)
        if n is not None and m is not None:
            return AreaClassification(AreaClass.MAXIMAL, "b1_4n-3", n, m, sum_ok)
        n, m = _odd_multiple(phi_B1, 1, tol), _odd_multiple(phi_B2, 3, tol)
        if n is not None and m is not None:
            return AreaClassification(AreaClass.MAXIMAL, "b1_4n-1", n, m, sum_ok)
    if abs(phi_B1 - math.pi) <= tol:
        k = _multiple_of(phi_B2, 2 * math.pi, tol)
        if k is not None:
            return AreaClassification(AreaClass.NULL, "null", 1, k, sum_ok)
        m = _odd_multiple(phi_B2, 3, tol)
        if m is not None:
            return AreaClassification(AreaClass.INVERTED, "inverted", 1, m, sum_ok)
    return AreaClassification(AreaClass.OFF_CONDITION, None, None, None, sum_ok)


# ---------------------------------------------------------------------------
# phase matching
# ---------------------------------------------------------------------------


class DegenerateGeometry(ValueError):
    pass


@dataclass(frozen=True)
class PhaseMatch:
    k_E: np.ndarray
    omega_E: Optional[float]
    backwardness: float  # cos of the angle between k_E and -k_D


def phase_match(k_D, k_B1, k_B2, omega_D=None, omega_B1=None, omega_B2=None) -> PhaseMatch:
    """Echo wave vector k_D - k_B1 + k_B2 and carrier omega_D - omega_B1 + omega_B2."""
    vecs = [np.asarray(k, dtype=float) for k in (k_D, k_B1, k_B2)]
    for v in vecs:
        if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ValueError("wave vectors must be unit 3-vectors")
    kD, kB1, kB2 = vecs
    k_E = kD - kB1 + kB2
    norm = float(np.linalg.norm(k_E))
    if norm < 1e-12:
        raise DegenerateGeometry("echo wave vector vanishes")
    omega_E = None
    if None not in (omega_D, omega_B1, omega_B2):
        omega_E = omega_D - omega_B1 + omega_B2
    return PhaseMatch(k_E, omega_E, -float(k_E @ kD) / norm)
