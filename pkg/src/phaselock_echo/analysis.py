"""Echo extraction, signed efficiency, decay fits and parameter sweeps."""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import EnsembleGrid, PulseSequence, RelaxationParams, SequenceKind
from .ensemble import MacroscopicSignal, Sampling, simulate_ensemble
from .integrator import IntegrationDiverged
from .protocol import (
    ProtocolError,
    ProtocolParams,
    build_sequence,
    build_two_pulse,
    predict_echo_time,
    two_pulse_echo_time,
)

log = logging.getLogger(__name__)

WINDOW_GUARD = 0.5  # us skipped after the last pulse before searching for the echo


class DegenerateFit(ValueError):
    pass


@dataclass(frozen=True)
class EchoReport:
    t_peak: float
    amplitude: complex
    window: tuple[float, float]
    edge_peak: bool = False

    @property
    def intensity(self) -> float:
        return abs(self.amplitude) ** 2


@dataclass(frozen=True)
class DecayFit:
    tau: float
    I0: float
    residual: float
    model: str = "I(t) = I0*exp(-2t/tau)"

    def __call__(self, t):
        return self.I0 * np.exp(-2.0 * np.asarray(t) / self.tau)


def default_window(seq: PulseSequence) -> tuple[float, float]:
    return (seq.last_pulse_end + WINDOW_GUARD, seq.t_end)


def detect_echo(sig: MacroscopicSignal, window: Optional[tuple[float, float]] = None,
                seq: Optional[PulseSequence] = None) -> EchoReport:
    """Largest |P| inside ``window``, refined by a parabola through the three nearest samples.

    The complex amplitude is interpolated at the refined time with the same
    three-point stencil.  ``edge_peak`` flags a maximum on the window border
    (including an identically zero window).
    """
    if window is None:
        if seq is None:
            raise ValueError("need a window or a sequence to derive one")
        window = default_window(seq)
    t0, t1 = window
    if seq is not None:
        for p in seq.pulses:
            if p.t_start < t1 and p.t_end > t0:
                raise ValueError(f"echo window [{t0}, {t1}] overlaps pulse {p.label}")
    idx = np.flatnonzero(sig.window(t0, t1))
    if idx.size == 0:
        raise ValueError(f"no samples inside window [{t0}, {t1}]")
    mag = np.abs(sig.P[idx])
    k = int(np.argmax(mag))
    if mag[k] == 0.0 or k == 0 or k == idx.size - 1:
        i = idx[k]
        return EchoReport(float(sig.times[i]), complex(sig.P[i]), (t0, t1), edge_peak=True)
    i = idx[k]
    ts = sig.times[i - 1:i + 2]
    ys = mag[k - 1:k + 2]
    # vertex of the interpolating parabola (non-uniform spacing allowed)
    c = np.polyfit(ts - ts[1], ys, 2)
    t_peak = float(ts[1])
    if c[0] < 0:
        shift = -c[1] / (2 * c[0])
        if abs(shift) <= max(ts[2] - ts[1], ts[1] - ts[0]):
            t_peak = float(ts[1] + shift)
    Ps = sig.P[i - 1:i + 2]
    amp = complex(_lagrange3(ts, Ps, t_peak))
    return EchoReport(t_peak, amp, (t0, t1))


def _lagrange3(ts, ys, t):
    t0, t1, t2 = ts
    return (ys[0] * (t - t1) * (t - t2) / ((t0 - t1) * (t0 - t2))
            + ys[1] * (t - t0) * (t - t2) / ((t1 - t0) * (t1 - t2))
            + ys[2] * (t - t0) * (t - t1) / ((t2 - t0) * (t2 - t1)))


def signed_efficiency(test: EchoReport, reference: EchoReport) -> float:
    """Projection of the test echo onto the reference echo's phase, normalised.

    +1 is an identical echo, -1 an echo of equal size with inverted sign.
    """
    ref = reference.amplitude
    if ref == 0:
        raise ValueError("reference echo amplitude is zero")
    if test is reference or test.amplitude == ref:
        return 1.0
    return (test.amplitude * ref.conjugate()).real / abs(ref) ** 2


def fit_decay(points: Sequence[tuple[float, float]]) -> DecayFit:
    """Least-squares line through (t, ln I); slope is -2/tau."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("need at least three (t, I) points")
    t, I = pts[:, 0], pts[:, 1]
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite data")
    if np.any(I <= 0):
        raise ValueError("intensities must be > 0")
    if len(np.unique(t)) != len(t) or np.ptp(t) <= 1e-12 * max(1.0, np.max(np.abs(t))):
        raise ValueError("times must be distinct with a non-zero spread")
    y = np.log(I)
    slope, intercept = np.polyfit(t, y, 1)
    if not slope < 0:
        raise DegenerateFit(f"intensity does not decay (slope {slope:.3g} per us)")
    resid = y - (slope * t + intercept)
    return DecayFit(tau=-2.0 / slope, I0=float(math.exp(intercept)), residual=float(np.sqrt(np.mean(resid**2))))


def spin_width(tau: float) -> float:
    """Spin inhomogeneous width in kHz from a decay constant in us: 1/(pi*tau)."""
    if not tau > 0:
        raise ValueError("tau must be > 0")
    if math.isinf(tau):
        return 0.0
    return 1e3 / (math.pi * tau)


# ---------------------------------------------------------------------------
# experiments and sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Experiment:
    """Everything needed for one simulation plus the optional reference echo."""

    kind: SequenceKind = SequenceKind.PHASE_LOCKED
    params: ProtocolParams = field(default_factory=ProtocolParams)
    grid: EnsembleGrid = field(default_factory=lambda: EnsembleGrid.single())
    relax: RelaxationParams = field(default_factory=RelaxationParams)
    sampling: Sampling = field(default_factory=Sampling)
    reference_T_R: Optional[float] = None
    threads: int = 1

    def sequence(self) -> PulseSequence:
        return build_sequence(self.params, self.kind)

    def predicted_echo_time(self) -> float:
        p = self.params
        if self.kind is SequenceKind.TWO_PULSE:
            return two_pulse_echo_time(p.T_D, p.T_R)
        return predict_echo_time(p.T_D, p.T_R, p.T_B1, p.T_B2)

    def reference_sequence(self, T_R: Optional[float] = None) -> PulseSequence:
        """Conventional two-pulse sequence sharing D and R with this experiment."""
        T_R = T_R if T_R is not None else (self.reference_T_R if self.reference_T_R is not None else self.params.T_R)
        return build_two_pulse(self.params.with_(T_R=T_R, t_end=None))

    def simulate(self, seq: Optional[PulseSequence] = None, with_populations: bool = False) -> MacroscopicSignal:
        seq = seq if seq is not None else self.sequence()
        return simulate_ensemble(seq, self.grid, self.relax, self.sampling, self.threads, with_populations)


def run_echo(exp: Experiment, seq: Optional[PulseSequence] = None) -> tuple[MacroscopicSignal, EchoReport]:
    seq = seq if seq is not None else exp.sequence()
    sig = exp.simulate(seq)
    return sig, detect_echo(sig, default_window(seq), seq)


def reference_echo(exp: Experiment, T_R: Optional[float] = None) -> EchoReport:
    return run_echo(exp, exp.reference_sequence(T_R))[1]


class SweepAxis(str, enum.Enum):
    R_DELAY = "r-delay"
    LOCK_DURATION = "lock-duration"
    B1_DELAY = "b1-delay"
    B2_AREA = "b2-area"

    @classmethod
    def parse(cls, text: str) -> "SweepAxis":
        key = text.strip().lower().replace("_", "-")
        for axis in cls:
            if axis.value == key:
                return axis
        raise ValueError(f"unknown sweep axis {text!r}; choose from {', '.join(a.value for a in cls)}")


@dataclass(frozen=True)
class SweepRow:
    value: float
    echo: Optional[EchoReport]
    efficiency: Optional[float]
    error: Optional[str] = None


def sweep_point(exp: Experiment, axis: SweepAxis, value: float) -> Experiment:
    """The experiment obtained by setting ``axis`` to ``value`` on ``exp``."""
    p = exp.params
    if axis is SweepAxis.R_DELAY:
        if exp.kind is SequenceKind.TWO_PULSE:
            q = p.with_(T_R=value, t_end=None)
        else:
            lock_delay, lock = p.T_B1 - p.T_R, p.T_B2 - p.T_B1
            q = p.with_(T_R=value, T_B1=value + lock_delay, T_B2=value + lock_delay + lock, t_end=None)
    elif axis is SweepAxis.LOCK_DURATION:
        q = p.with_(T_B2=p.T_B1 + value, t_end=None)
    elif axis is SweepAxis.B1_DELAY:
        lock = p.T_B2 - p.T_B1
        q = p.with_(T_B1=p.T_R + value, T_B2=p.T_R + value + lock, t_end=None)
    elif axis is SweepAxis.B2_AREA:
        q = p.with_(area_B2=value, t_end=p.t_end)
    else:  # pragma: no cover
        raise ValueError(axis)
    if axis is not SweepAxis.R_DELAY and exp.kind is SequenceKind.TWO_PULSE:
        raise ValueError(f"axis {axis.value} needs a phase-locked base scenario")
    return Experiment(exp.kind, q, exp.grid, exp.relax, exp.sampling, exp.reference_T_R, exp.threads)


def run_sweep(exp: Experiment, axis: SweepAxis | str, values: Sequence[float], threads: int = 1) -> list[SweepRow]:
    """One simulation per value, in input order; bad points are recorded, not raised.

    Efficiencies are relative to a single reference echo from the base
    scenario's two-pulse configuration.
    """
    axis = axis if isinstance(axis, SweepAxis) else SweepAxis.parse(axis)
    ref = reference_echo(exp)

    def one(value):
        try:
            point = sweep_point(exp, axis, float(value))
            echo = run_echo(point)[1]
        except (ProtocolError, ValueError, IntegrationDiverged) as exc:
            log.warning("sweep point %s=%g skipped: %s", axis.value, value, exc)
            return SweepRow(float(value), None, None, str(exc))
        return SweepRow(float(value), echo, signed_efficiency(echo, ref))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, values))
    return [one(v) for v in values]
