"""Time evolution of the three-level density matrix of one (or many) atom groups.

Levels are |1> (ground), |2> (auxiliary spin state), |3> (excited); array
index 0, 1, 2.  In the frame co-rotating with both optical fields the
Hamiltonian (rad/us) is

    H = [[0,        0,        -W13/2],
         [0,        0,        -W23/2],
         [-W13*/2,  -W23*/2,  -delta ]]

so a pulse of area W*t = pi fully inverts a resonant transition.  The
coherences obey

    d rho13/dt = i W13/2 (rho33 - rho11) - i W23/2 rho12 - (i delta + g13) rho13
    d rho23/dt = i W23/2 (rho33 - rho22) - i W13/2 rho21 - (i delta + g23) rho23
    d rho12/dt = i W13/2 rho32 - i W23*/2 rho13 - g12 rho12

and the populations relax along |3> -> |1>, |3> -> |2>, |2> -> |1> with
the trace conserved.

Every function broadcasts over leading axes: ``rho`` may be (3, 3) or
(N, 3, 3) with ``delta`` scalar or (N,).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    HERMITIAN_TOL,
    TRACE_TOL,
    TWO_PI,
    PulseSequence,
    RelaxationParams,
    Transition,
    density_matrix_violations,
    hermiticity_defect,
)

DEFAULT_DT_PULSE = 1e-3  # us
DEFAULT_DT_SAMPLE = 0.01  # us


class IntegrationDiverged(RuntimeError):
    """The state left the density-matrix manifold beyond tolerance."""

    def __init__(self, time: float, reason: str, detuning: Optional[float] = None):
        self.time = time
        self.reason = reason
        self.detuning = detuning
        where = f" (group detuning {detuning:g} MHz)" if detuning is not None else ""
        super().__init__(f"integration diverged at t={time:.6g} us{where}: {reason}")


@dataclass(frozen=True)
class DriveSnapshot:
    """Instantaneous drive, all angular (rad/us)."""

    omega13: complex = 0.0
    omega23: complex = 0.0
    delta: float | np.ndarray = 0.0

    @classmethod
    def from_mhz(cls, rabi13=0.0, rabi23=0.0, delta=0.0, phase13=0.0, phase23=0.0):
        return cls(
            TWO_PI * rabi13 * np.exp(1j * phase13),
            TWO_PI * rabi23 * np.exp(1j * phase23),
            TWO_PI * np.asarray(delta, dtype=float),
        )


@dataclass
class Trajectory:
    times: np.ndarray  # (T,)
    states: np.ndarray  # (T, 3, 3)
    group_detuning: float  # MHz

    def element(self, j: int, k: int) -> np.ndarray:
        """rho_jk over time with 1-based level indices."""
        return self.states[:, j - 1, k - 1]

    def at(self, t: float) -> np.ndarray:
        """State at the sample nearest to ``t``."""
        return self.states[int(np.argmin(np.abs(self.times - t)))]


def hamiltonian(drive: DriveSnapshot) -> np.ndarray:
    delta = np.asarray(drive.delta, dtype=float)
    H = np.zeros(delta.shape + (3, 3), dtype=complex)
    H[..., 0, 2] = -0.5 * drive.omega13
    H[..., 2, 0] = -0.5 * np.conj(drive.omega13)
    H[..., 1, 2] = -0.5 * drive.omega23
    H[..., 2, 1] = -0.5 * np.conj(drive.omega23)
    H[..., 2, 2] = -delta
    return H


def _relaxation(rho: np.ndarray, rates: dict[str, float]) -> np.ndarray:
    out = np.zeros_like(rho)
    r33 = rho[..., 2, 2].real
    r22 = rho[..., 1, 1].real
    out[..., 2, 2] = -(rates["pop_31"] + rates["pop_32"]) * r33
    out[..., 1, 1] = rates["pop_32"] * r33 - rates["pop_21"] * r22
    out[..., 0, 0] = rates["pop_31"] * r33 + rates["pop_21"] * r22
    for (j, k), key in (((0, 2), "c13"), ((1, 2), "c23"), ((0, 1), "c12")):
        out[..., j, k] = -rates[key] * rho[..., j, k]
        out[..., k, j] = -rates[key] * rho[..., k, j]
    return out


def rhs(rho: np.ndarray, drive: DriveSnapshot, relax: RelaxationParams) -> np.ndarray:
    """d(rho)/dt for the driven, damped three-level system."""
    return _rhs(rho, hamiltonian(drive), relax.angular())


def _rhs(rho, H, rates):
    comm = H @ rho - rho @ H
    return -1j * comm + _relaxation(rho, rates)


def _check(rho, t, detuning=None):
    problems = density_matrix_violations(rho)
    if problems:
        raise IntegrationDiverged(t, "; ".join(problems), detuning)


def propagate_pulsed(
    rho: np.ndarray,
    t0: float,
    t1: float,
    drive: DriveSnapshot,
    relax: RelaxationParams,
    dt: float = DEFAULT_DT_PULSE,
    sample_every: int = 0,
) -> tuple[np.ndarray, list[tuple[float, np.ndarray]]]:
    """Classic fixed-step RK4 over [t0, t1] under a constant drive.

    The step is shrunk to divide the window evenly.  If ``sample_every`` > 0
    every n-th intermediate state is returned alongside the final one.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    span = t1 - t0
    if span < 0:
        raise ValueError("window must have t1 >= t0")
    rho = np.array(rho, dtype=complex)
    samples: list[tuple[float, np.ndarray]] = []
    if span == 0:
        return rho, samples
    n = max(1, math.ceil(span / dt - 1e-9))
    h = span / n
    H = hamiltonian(drive)
    rates = relax.angular()
    for i in range(1, n + 1):
        k1 = _rhs(rho, H, rates)
        k2 = _rhs(rho + 0.5 * h * k1, H, rates)
        k3 = _rhs(rho + 0.5 * h * k2, H, rates)
        k4 = _rhs(rho + h * k3, H, rates)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if sample_every and i % sample_every == 0 and i != n:
            samples.append((t0 + i * h, rho.copy()))
    _check(rho, t1)
    return rho, samples


def propagate_free(rho: np.ndarray, dt_total: float | np.ndarray, delta: float | np.ndarray,
                   relax: RelaxationParams) -> np.ndarray:
    """Exact field-free evolution over ``dt_total`` us at detuning ``delta`` MHz.

    ``dt_total`` may be an array of durations of shape (T,); the result then
    has shape (T, ..., 3, 3).
    """
    rho = np.asarray(rho, dtype=complex)
    r = relax.angular()
    t = np.asarray(dt_total, dtype=float)
    # broadcast t over the state's leading (group) axes
    tt = t.reshape(t.shape + (1,) * (rho.ndim - 2))
    w = TWO_PI * np.asarray(delta, dtype=float)

    out = np.broadcast_to(rho, t.shape + rho.shape).copy()

    rot = np.exp(-(1j * w + r["c13"]) * tt)
    rot23 = np.exp(-(1j * w + r["c23"]) * tt)
    damp12 = np.exp(-r["c12"] * tt)
    out[..., 0, 2] = rho[..., 0, 2] * rot
    out[..., 2, 0] = np.conj(out[..., 0, 2])
    out[..., 1, 2] = rho[..., 1, 2] * rot23
    out[..., 2, 1] = np.conj(out[..., 1, 2])
    out[..., 0, 1] = rho[..., 0, 1] * damp12
    out[..., 1, 0] = np.conj(out[..., 0, 1])

    a = r["pop_31"] + r["pop_32"]
    b = r["pop_21"]
    p11, p22, p33 = (rho[..., i, i].real for i in range(3))
    e_a = np.exp(-a * tt)
    e_b = np.exp(-b * tt)
    # (e^{-a t} - e^{-b t}) / (b - a), continuous through a == b
    x = (b - a) * tt
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(np.abs(x) > 1e-8, -np.expm1(-x) / np.where(x == 0, 1.0, x), 1.0 - 0.5 * x)
    feed = e_a * tt * ratio
    n33 = p33 * e_a
    n22 = p22 * e_b + r["pop_32"] * p33 * feed
    n11 = (p11 + p22 + p33) - n22 - n33
    out[..., 0, 0] = n11
    out[..., 1, 1] = n22
    out[..., 2, 2] = n33
    return out


# ---------------------------------------------------------------------------
# sequence driver
# ---------------------------------------------------------------------------


def _segments(seq: PulseSequence):
    """Split [0, t_end] into free and driven windows with constant drive."""
    edges = {0.0, seq.t_end}
    for p in seq.pulses:
        edges.update((p.t_start, p.t_end))
    edges = sorted(e for e in edges if 0.0 <= e <= seq.t_end)
    out = []
    for a, b in zip(edges, edges[1:]):
        if b - a <= 1e-12:
            continue
        mid = 0.5 * (a + b)
        w13 = sum((p.omega for p in seq.pulses if p.transition is Transition.T13 and p.t_start <= mid < p.t_end), 0j)
        w23 = sum((p.omega for p in seq.pulses if p.transition is Transition.T23 and p.t_start <= mid < p.t_end), 0j)
        out.append((a, b, w13, w23))
    return out


def evolve(
    rho0: np.ndarray,
    seq: PulseSequence,
    delta: float | np.ndarray,
    relax: RelaxationParams,
    dt_pulse: float = DEFAULT_DT_PULSE,
    dt_sample: float = DEFAULT_DT_SAMPLE,
    observer: Optional[Callable[[np.ndarray, np.ndarray], None]] = None,
) -> np.ndarray:
    """Drive a batch of groups through ``seq``; hand samples to ``observer(times, states)``.

    ``states`` passed to the observer has shape (T, *batch, 3, 3).  Free
    windows are sampled on the global grid k*dt_sample; driven windows every
    ~dt_sample of RK4 steps.  Window edges are always sampled.  Returns the
    final state.
    """
    if dt_pulse <= 0 or dt_sample <= 0:
        raise ValueError("dt_pulse and dt_sample must be > 0")
    shortest = min((p.duration for p in seq.pulses), default=math.inf)
    if dt_pulse > shortest / 20 + 1e-15:
        raise ValueError(f"dt_pulse={dt_pulse} exceeds 1/20 of the shortest pulse ({shortest} us)")
    rho = np.array(rho0, dtype=complex)
    delta = np.asarray(delta, dtype=float)
    if observer is not None:
        observer(np.array([0.0]), rho[None])
    for a, b, w13, w23 in _segments(seq):
        if w13 == 0 and w23 == 0:
            k0 = math.floor(a / dt_sample + 1e-9) + 1
            k1 = math.ceil(b / dt_sample - 1e-9) - 1
            grid = np.arange(k0, k1 + 1) * dt_sample
            grid = grid[(grid > a + 1e-9) & (grid < b - 1e-9)]
            if observer is not None and grid.size:
                observer(grid, propagate_free(rho, grid - a, delta, relax))
            rho = propagate_free(rho, b - a, delta, relax)
            _check(rho, b)
        else:
            drive = DriveSnapshot(w13, w23, TWO_PI * delta)
            every = max(1, round(dt_sample / dt_pulse))
            rho, samples = propagate_pulsed(rho, a, b, drive, relax, dt_pulse, sample_every=every)
            if observer is not None and samples:
                observer(np.array([s[0] for s in samples]), np.stack([s[1] for s in samples]))
        if observer is not None:
            observer(np.array([b]), rho[None])
    return rho


def propagate_sequence(
    rho0: np.ndarray,
    seq: PulseSequence,
    delta: float,
    relax: RelaxationParams,
    dt_pulse: float = DEFAULT_DT_PULSE,
    dt_sample: float = DEFAULT_DT_SAMPLE,
) -> Trajectory:
    """Full trajectory of one group (detuning ``delta`` MHz) under ``seq``."""
    times, states = [], []

    def keep(t, s):
        times.append(t)
        states.append(s)

    evolve(rho0, seq, float(delta), relax, dt_pulse, dt_sample, keep)
    return Trajectory(np.concatenate(times), np.concatenate(states), float(delta))


__all__ = [
    "DEFAULT_DT_PULSE",
    "DEFAULT_DT_SAMPLE",
    "DriveSnapshot",
    "IntegrationDiverged",
    "Trajectory",
    "evolve",
    "hamiltonian",
    "hermiticity_defect",
    "propagate_free",
    "propagate_pulsed",
    "propagate_sequence",
    "rhs",
    "HERMITIAN_TOL",
    "TRACE_TOL",
]
