"""Domain types shared by the simulator: pulses, sequences, relaxation, ensemble grids.

Unit convention
---------------
Every configured frequency (Rabi frequency, detuning, decay rate) is an
*ordinary* frequency: MHz for Rabi/detuning, kHz for relaxation rates.
Times are in microseconds.  The dynamics multiply by 2*pi internally, so
a 5 MHz Rabi frequency held for 0.1 us is a pi pulse.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-9
POPULATION_TOL = 1e-12


class Transition(str, enum.Enum):
    """Optical leg a pulse drives: |1>-|3> (data/rephasing) or |2>-|3> (lock/unlock)."""

    T13 = "T13"
    T23 = "T23"


class SequenceKind(str, enum.Enum):
    TWO_PULSE = "two_pulse"
    PHASE_LOCKED = "phase_locked"


# ---------------------------------------------------------------------------
# density matrices
# ---------------------------------------------------------------------------


def ground_state() -> np.ndarray:
    """Pure |1><1| as a 3x3 complex array."""
    rho = np.zeros((3, 3), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def hermiticity_defect(rho: np.ndarray) -> float:
    """Largest |rho - rho^dagger| element over a (..., 3, 3) stack."""
    rho = np.asarray(rho)
    return float(np.max(np.abs(rho - np.conj(np.swapaxes(rho, -1, -2))), initial=0.0))


def density_matrix_violations(rho: np.ndarray) -> list[str]:
    """Return a description of every broken density-matrix invariant (empty if valid).

    Works on a single (3, 3) matrix or a stack of them.
    """
    rho = np.asarray(rho)
    problems = []
    if rho.shape[-2:] != (3, 3):
        return [f"expected trailing shape (3, 3), got {rho.shape}"]
    if not np.all(np.isfinite(rho)):
        return ["non-finite entries"]
    herm = hermiticity_defect(rho)
    if herm > HERMITIAN_TOL:
        problems.append(f"hermiticity defect {herm:.3e}")
    diag = np.diagonal(rho, axis1=-2, axis2=-1)
    if np.max(np.abs(diag.imag), initial=0.0) > HERMITIAN_TOL:
        problems.append("complex diagonal")
    pops = diag.real
    if np.min(pops) < -POPULATION_TOL or np.max(pops) > 1.0 + POPULATION_TOL:
        problems.append(f"population outside [0, 1]: [{np.min(pops):.3e}, {np.max(pops):.3e}]")
    tr = pops.sum(axis=-1)
    if np.min(tr) < -TRACE_TOL or np.max(tr) > 1.0 + TRACE_TOL:
        problems.append(f"trace outside [0, 1]: {np.max(tr):.12f}")
    return problems


def check_density_matrix(rho: np.ndarray) -> np.ndarray:
    """Raise ValueError if ``rho`` is not a valid density matrix, else return it as complex."""
    rho = np.asarray(rho, dtype=complex)
    problems = density_matrix_violations(rho)
    if problems:
        raise ValueError("invalid density matrix: " + "; ".join(problems))
    return rho


# ---------------------------------------------------------------------------
# relaxation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RelaxationParams:
    """Population (``gamma_pop_*``) and coherence (``gamma_*``) decay rates in kHz.

    ``gamma_pop_31`` is |3> -> |1>, ``gamma_pop_32`` is |3> -> |2>,
    ``gamma_pop_21`` is |2> -> |1>.  ``gamma_13``, ``gamma_23``, ``gamma_12``
    damp the matching off-diagonal elements.
    """

    gamma_pop_31: float = 0.0
    gamma_pop_32: float = 0.0
    gamma_pop_21: float = 0.0
    gamma_13: float = 0.0
    gamma_23: float = 0.0
    gamma_12: float = 0.0

    def __post_init__(self):
        for name in ("gamma_pop_31", "gamma_pop_32", "gamma_pop_21", "gamma_13", "gamma_23", "gamma_12"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite rate >= 0, got {value!r}")

    @classmethod
    def reference_defaults(cls) -> "RelaxationParams":
        """Rates of the reference numerical experiment: 5 kHz population, 10 kHz optical dephasing."""
        return cls(gamma_pop_31=5.0, gamma_pop_32=5.0, gamma_13=10.0, gamma_23=10.0)

    def angular(self) -> dict[str, float]:
        """Rates in rad/us (kHz -> MHz -> angular)."""
        return {
            "pop_31": TWO_PI * self.gamma_pop_31 * 1e-3,
            "pop_32": TWO_PI * self.gamma_pop_32 * 1e-3,
            "pop_21": TWO_PI * self.gamma_pop_21 * 1e-3,
            "c13": TWO_PI * self.gamma_13 * 1e-3,
            "c23": TWO_PI * self.gamma_23 * 1e-3,
            "c12": TWO_PI * self.gamma_12 * 1e-3,
        }


NO_RELAXATION = RelaxationParams()


# ---------------------------------------------------------------------------
# pulses and sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pulse:
    """Rectangular drive on one optical transition.

    ``rabi_freq`` is in MHz (ordinary frequency), times in us, ``phase`` in rad.
    """

    transition: Transition
    t_start: float
    duration: float
    rabi_freq: float
    phase: float = 0.0
    wavevector: Optional[tuple[float, float, float]] = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "transition", Transition(self.transition))
        if not (math.isfinite(self.t_start) and math.isfinite(self.duration)):
            raise ValueError("pulse times must be finite")
        if self.duration <= 0:
            raise ValueError(f"pulse {self.label!r}: duration must be > 0, got {self.duration}")
        if not math.isfinite(self.rabi_freq) or self.rabi_freq < 0:
            raise ValueError(f"pulse {self.label!r}: rabi_freq must be >= 0, got {self.rabi_freq}")
        if self.wavevector is not None:
            k = tuple(float(x) for x in self.wavevector)
            if len(k) != 3:
                raise ValueError("wavevector must have three components")
            if abs(math.sqrt(sum(x * x for x in k)) - 1.0) > 1e-9:
                raise ValueError(f"pulse {self.label!r}: wavevector must be a unit vector")
            object.__setattr__(self, "wavevector", k)

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration

    @property
    def omega(self) -> complex:
        """Complex angular Rabi frequency (rad/us) carrying the pulse phase."""
        return TWO_PI * self.rabi_freq * complex(math.cos(self.phase), math.sin(self.phase))


def pulse_area(p: Pulse) -> float:
    """Area of a rectangular pulse in radians: 2*pi * rabi_freq[MHz] * duration[us]."""
    return TWO_PI * p.rabi_freq * p.duration


@dataclass(frozen=True)
class PulseSequence:
    pulses: tuple[Pulse, ...]
    t_end: float

    def __post_init__(self):
        pulses = tuple(self.pulses)
        object.__setattr__(self, "pulses", pulses)
        starts = [p.t_start for p in pulses]
        if starts != sorted(starts):
            raise ValueError("pulses must be sorted by t_start")
        for tr in Transition:
            same = [p for p in pulses if p.transition is tr]
            for a, b in zip(same, same[1:]):
                if b.t_start < a.t_end:
                    raise ValueError(f"pulses {a.label!r} and {b.label!r} overlap on {tr.value}")
        if pulses and self.t_end < max(p.t_end for p in pulses):
            raise ValueError("t_end must cover every pulse")
        if not math.isfinite(self.t_end) or self.t_end <= 0:
            raise ValueError("t_end must be a positive finite time")

    def by_label(self, label: str) -> Optional[Pulse]:
        for p in self.pulses:
            if p.label == label:
                return p
        return None

    @property
    def last_pulse_end(self) -> float:
        return max((p.t_end for p in self.pulses), default=0.0)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    kind: SequenceKind
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


def validate_sequence(seq: PulseSequence, kind: SequenceKind | str) -> ValidationReport:
    """Check a sequence against the protocol layout; never raises on protocol errors.

    Two-pulse: D then R on T13.  Phase-locked: D, R on T13 and B1, B2 on T23,
    ordered D < R < B1 < B2, with B1 arriving before rephasing completes,
    i.e. (T_B1 - T_R) < (T_R - T_D).
    """
    kind = SequenceKind(kind)
    out: list[Violation] = []
    pulses = {p.label: p for p in seq.pulses}

    def need(label, transition):
        p = pulses.get(label)
        if p is None:
            out.append(Violation("MISSING_PULSE", f"sequence has no {label} pulse"))
        elif p.transition is not transition:
            out.append(Violation("WRONG_TRANSITION", f"{label} must drive {transition.value}, drives {p.transition.value}"))
        return p

    if kind is SequenceKind.TWO_PULSE:
        expected = ["D", "R"]
        d, r = need("D", Transition.T13), need("R", Transition.T13)
        if d and r and not d.t_start < r.t_start:
            out.append(Violation("ORDER", f"T_D={d.t_start} must precede T_R={r.t_start}"))
    else:
        expected = ["D", "R", "B1", "B2"]
        d, r = need("D", Transition.T13), need("R", Transition.T13)
        b1, b2 = need("B1", Transition.T23), need("B2", Transition.T23)
        present = [p for p in (d, r, b1, b2) if p is not None]
        if len(present) == 4:
            if not (d.t_start < r.t_start < b1.t_start < b2.t_start):
                out.append(Violation(
                    "ORDER",
                    f"need T_D < T_R < T_B1 < T_B2, got {d.t_start}, {r.t_start}, {b1.t_start}, {b2.t_start}",
                ))
            lock_delay = b1.t_start - r.t_start
            storage = r.t_start - d.t_start
            if not lock_delay < storage:
                out.append(Violation(
                    "LOCK_TOO_LATE",
                    f"B1 arrives {lock_delay:g} us after R, not before rephasing completes ({storage:g} us)",
                ))
    extra = sorted(set(pulses) - set(expected))
    if extra:
        out.append(Violation("UNEXPECTED_PULSE", "unexpected pulses: " + ", ".join(extra)))
    if len(pulses) != len(seq.pulses):
        out.append(Violation("DUPLICATE_LABEL", "pulse labels must be unique"))
    return ValidationReport(kind, tuple(out))


# ---------------------------------------------------------------------------
# inhomogeneous ensemble
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AtomGroup:
    detuning: float  # MHz, shared by both optical legs
    weight: float


@dataclass(frozen=True)
class EnsembleGrid:
    groups: tuple[AtomGroup, ...] = field(default_factory=tuple)

    def __post_init__(self):
        groups = tuple(self.groups)
        object.__setattr__(self, "groups", groups)
        if not groups:
            raise ValueError("ensemble grid needs at least one group")
        det = [g.detuning for g in groups]
        if any(b <= a for a, b in zip(det, det[1:])):
            raise ValueError("detunings must be strictly increasing")
        if any(g.weight < 0 for g in groups):
            raise ValueError("weights must be >= 0")
        if abs(math.fsum(g.weight for g in groups) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")

    @property
    def detunings(self) -> np.ndarray:
        return np.array([g.detuning for g in self.groups])

    @property
    def weights(self) -> np.ndarray:
        return np.array([g.weight for g in self.groups])

    @classmethod
    def single(cls, detuning: float = 0.0) -> "EnsembleGrid":
        return cls((AtomGroup(detuning, 1.0),))

    @classmethod
    def from_arrays(cls, detunings: Sequence[float], weights: Sequence[float]) -> "EnsembleGrid":
        return cls(tuple(AtomGroup(float(d), float(w)) for d, w in zip(detunings, weights)))


def gaussian_grid(fwhm: float, spacing: float, count: int) -> EnsembleGrid:
    """Equally spaced Gaussian line, truncated at +/-(count-1)/2 * spacing.

    Weights are exactly mirror-symmetric: the positive half is computed
    once and reflected.
    """
    if isinstance(count, bool) or int(count) != count or count < 1 or count % 2 == 0:
        raise ValueError(f"count must be an odd positive integer, got {count!r}")
    for name, value in (("fwhm", fwhm), ("spacing", spacing)):
        if not math.isfinite(value) or value <= 0:
            raise ValueError(f"{name} must be finite and > 0, got {value!r}")
    count = int(count)
    half = (count - 1) // 2
    pos = np.arange(1, half + 1) * spacing
    w_pos = np.exp(-4.0 * math.log(2.0) * pos**2 / fwhm**2)
    det = np.concatenate([-pos[::-1], [0.0], pos])
    raw = np.concatenate([w_pos[::-1], [1.0], w_pos])
    # pairwise-symmetric normalization: the sum is order-independent for mirrored terms
    total = 1.0 + 2.0 * math.fsum(w_pos)
    weights = raw / total
    # push the rounding residue of the normalization onto the centre group so sum == 1
    weights[half] = 1.0 - 2.0 * math.fsum(weights[half + 1:])
    return EnsembleGrid.from_arrays(det, weights)
