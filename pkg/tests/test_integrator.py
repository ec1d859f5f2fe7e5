import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from phaselock_echo.core import NO_RELAXATION, Pulse, PulseSequence, RelaxationParams, ground_state, hermiticity_defect
from phaselock_echo.integrator import (
    DriveSnapshot,
    IntegrationDiverged,
    evolve,
    propagate_free,
    propagate_pulsed,
    propagate_sequence,
    rhs,
)

PI = math.pi
TWO_PI = 2 * PI


def random_state(seed, pure=False):
    rng = np.random.default_rng(seed)
    if pure:
        psi = rng.normal(size=3) + 1j * rng.normal(size=3)
        psi /= np.linalg.norm(psi)
        return np.outer(psi, psi.conj())
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def liouvillian_expm(rho, t, w13, w23, delta):
    """Exact unitary evolution via the vectorised commutator superoperator."""
    H = np.array([
        [0, 0, -w13 / 2],
        [0, 0, -w23 / 2],
        [-np.conj(w13) / 2, -np.conj(w23) / 2, -delta],
    ], dtype=complex)
    eye = np.eye(3)
    L = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    v = expm(L * t) @ rho.reshape(-1, order="F")
    return v.reshape(3, 3, order="F")


def damped_bloch(t, omega, gamma, Gamma):
    """Resonant two-level Bloch equations (Re rho13, Im rho13, rho33) solved by expm.

    da/dt = -g a;  db/dt = (W/2)(2p - 1) - g b;  dp/dt = -W b - G p.
    """
    M = np.array([
        [-gamma, 0, 0, 0],
        [0, -gamma, omega, -omega / 2],
        [0, -omega, -Gamma, 0],
        [0, 0, 0, 0],
    ])
    x = expm(M * t) @ np.array([0.0, 0.0, 0.0, 1.0])
    return complex(x[0], x[1]), x[2]


# --- rhs ------------------------------------------------------------------


def test_rhs_ground_state_stationary():
    assert np.array_equal(rhs(ground_state(), DriveSnapshot(), NO_RELAXATION), np.zeros((3, 3)))


def test_rhs_pure_dephasing():
    rho = np.zeros((3, 3), complex)
    rho[0, 2] = c = 0.3 - 0.2j
    rho[2, 0] = np.conj(c)
    relax = RelaxationParams(gamma_13=10.0)
    d = rhs(rho, DriveSnapshot(), relax)
    assert d[0, 2] == pytest.approx(-TWO_PI * 0.01 * c, rel=1e-14)


@given(st.integers(0, 10_000), st.floats(-5, 5), st.floats(-5, 5), st.floats(-1, 1), st.floats(0, 2 * PI))
@settings(max_examples=50, deadline=None)
def test_rhs_hermitian_and_traceless(seed, r13, r23, delta, phase):
    rho = random_state(seed)
    drive = DriveSnapshot.from_mhz(r13, r23, delta, phase13=phase)
    d = rhs(rho, drive, RelaxationParams(3, 4, 2, 10, 20, 5))
    assert np.allclose(d, d.conj().T, atol=1e-12)
    assert abs(np.trace(d)) < 1e-12
    # rhs(rho)^dagger == rhs(rho^dagger) for a non-Hermitian argument too
    m = np.random.default_rng(seed).normal(size=(3, 3)) + 1j
    assert np.allclose(rhs(m, drive, NO_RELAXATION).conj().T, rhs(m.conj().T, drive, NO_RELAXATION), atol=1e-12)


# --- propagate_pulsed ------------------------------------------------------


def test_pi_pulse_inverts():
    rho, _ = propagate_pulsed(ground_state(), 0, 0.1, DriveSnapshot.from_mhz(rabi13=5), NO_RELAXATION)
    assert rho[2, 2].real == pytest.approx(1.0, abs=1e-8)
    assert rho[0, 0].real == pytest.approx(0.0, abs=1e-8)


def test_half_pi_pulse_maximal_coherence():
    rho, _ = propagate_pulsed(ground_state(), 0, 0.05, DriveSnapshot.from_mhz(rabi13=5), NO_RELAXATION)
    assert rho[2, 2].real == pytest.approx(0.5, abs=1e-8)
    assert abs(rho[0, 2]) == pytest.approx(0.5, abs=1e-8)


def test_b1_pi_pulse_swaps_excited_to_spin():
    rho = np.zeros((3, 3), complex)
    rho[2, 2] = 1
    out, _ = propagate_pulsed(rho, 0, 0.1, DriveSnapshot.from_mhz(rabi23=5), NO_RELAXATION)
    assert out[1, 1].real == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("area", [PI / 4, PI / 2, PI, 1.7 * PI, 3 * PI, 4.5 * PI])
def test_resonant_rabi_closed_form(area):
    dur = area / (TWO_PI * 5)
    rho, _ = propagate_pulsed(ground_state(), 0, dur, DriveSnapshot.from_mhz(rabi13=5), NO_RELAXATION, dt=2.5e-4)
    assert rho[2, 2].real == pytest.approx(math.sin(area / 2) ** 2, abs=1e-8)


def test_two_level_reduction_damped_rabi():
    # Omega23 = 0, rho22 = 0, no feed into |2>: the {1,3} block is a damped two-level atom
    relax = RelaxationParams(gamma_pop_31=100.0, gamma_13=200.0)
    w, g, G = TWO_PI * 5, TWO_PI * 0.2, TWO_PI * 0.1
    for t in (0.05, 0.37, 1.0):
        rho, _ = propagate_pulsed(ground_state(), 0, t, DriveSnapshot.from_mhz(rabi13=5), relax)
        c13, p33 = damped_bloch(t, w, g, G)
        assert abs(rho[0, 2] - c13) < 1e-6
        assert abs(rho[2, 2].real - p33) < 1e-6
        assert abs(rho[1, 1]) < 1e-15


@given(st.integers(0, 10_000), st.floats(0, 6), st.floats(0, 6), st.floats(-1, 1), st.floats(0, 2 * PI))
@settings(max_examples=30, deadline=None)
def test_rk4_matches_superoperator_expm(seed, r13, r23, delta, phase):
    rho0 = random_state(seed)
    t = 0.3
    drive = DriveSnapshot.from_mhz(r13, r23, delta, phase13=phase)
    rho, _ = propagate_pulsed(rho0, 0, t, drive, NO_RELAXATION, dt=5e-4)
    exact = liouvillian_expm(rho0, t, drive.omega13, drive.omega23, float(drive.delta))
    assert np.max(np.abs(rho - exact)) < 1e-8


def test_divergence_is_reported_with_time():
    # 0.2 us steps at 5 MHz are far outside RK4's stability region
    with pytest.raises(IntegrationDiverged) as info:
        propagate_pulsed(ground_state(), 1.0, 21.0, DriveSnapshot.from_mhz(rabi13=5), NO_RELAXATION, dt=0.2)
    assert info.value.time == pytest.approx(21.0)
    assert "21" in str(info.value)


def test_dt_precondition():
    seq = PulseSequence((Pulse("T13", 1.0, 0.01, 5.0, label="D"),), 2.0)
    with pytest.raises(ValueError, match="1/20"):
        evolve(ground_state(), seq, 0.0, NO_RELAXATION, dt_pulse=1e-3)


# --- propagate_free --------------------------------------------------------


def test_free_identity_without_detuning_or_relaxation():
    rho = random_state(3)
    assert np.allclose(propagate_free(rho, 7.3, 0.0, NO_RELAXATION), rho, atol=1e-15)


def test_free_quarter_turn():
    rho = np.zeros((3, 3), complex)
    rho[0, 0] = rho[2, 2] = 0.5
    rho[0, 2] = rho[2, 0] = 0.5
    out = propagate_free(rho, 1.0, 0.25, NO_RELAXATION)
    assert out[0, 2] == pytest.approx(-0.5j, abs=1e-15)


@given(st.integers(0, 10_000), st.floats(-1, 1), st.floats(0.05, 3.0))
@settings(max_examples=30, deadline=None)
def test_free_matches_integrator(seed, delta, t):
    relax = RelaxationParams(30, 20, 10, 50, 40, 25)
    rho0 = random_state(seed)
    closed = propagate_free(rho0, t, delta, relax)
    numeric, _ = propagate_pulsed(rho0, 0, t, DriveSnapshot.from_mhz(delta=delta), relax)
    assert np.max(np.abs(closed - numeric)) < 1e-7


def test_free_equal_decay_rates_branch():
    # Gamma31 + Gamma32 == Gamma21 hits the degenerate branch of the decay chain
    relax = RelaxationParams(gamma_pop_31=10, gamma_pop_32=10, gamma_pop_21=20)
    rho0 = random_state(11)
    closed = propagate_free(rho0, 2.0, 0.1, relax)
    numeric, _ = propagate_pulsed(rho0, 0, 2.0, DriveSnapshot.from_mhz(delta=0.1), relax)
    assert np.max(np.abs(closed - numeric)) < 1e-7


def test_free_vectorised_over_times_and_groups():
    rho = np.stack([random_state(s) for s in range(4)])
    det = np.array([-0.2, 0.0, 0.1, 0.3])
    ts = np.array([0.0, 0.5, 2.0])
    out = propagate_free(rho, ts, det, RelaxationParams.reference_defaults())
    assert out.shape == (3, 4, 3, 3)
    for i, t in enumerate(ts):
        for j in range(4):
            single = propagate_free(rho[j], t, det[j], RelaxationParams.reference_defaults())
            assert np.array_equal(out[i, j], single)


def test_free_deterministic():
    rho = random_state(5)
    a = propagate_free(rho, 12.345, 0.37, RelaxationParams.reference_defaults())
    b = propagate_free(rho, 12.345, 0.37, RelaxationParams.reference_defaults())
    assert a.tobytes() == b.tobytes()


# --- propagate_sequence ----------------------------------------------------


def two_pulse_seq(t_end=20.0):
    return PulseSequence((Pulse("T13", 5, 0.05, 5.0, label="D"), Pulse("T13", 10, 0.1, 5.0, label="R")), t_end)


def locked_seq():
    return PulseSequence((
        Pulse("T13", 5, 0.05, 5.0, label="D"),
        Pulse("T13", 10, 0.1, 5.0, label="R"),
        Pulse("T23", 10.1, 0.1, 5.0, label="B1"),
        Pulse("T23", 55, 0.3, 5.0, label="B2"),
    ), 65.0)


def test_perfect_rephasing_on_resonance():
    traj = propagate_sequence(ground_state(), two_pulse_seq(), 0.0, NO_RELAXATION)
    assert abs(traj.at(15.0)[0, 2]) == pytest.approx(0.5, abs=1e-6)
    assert abs(traj.at(5.05)[0, 2]) == pytest.approx(0.5, abs=1e-6)


def test_r_swaps_phases_of_symmetric_pair():
    d = 0.04
    plus = propagate_sequence(ground_state(), two_pulse_seq(), d, NO_RELAXATION)
    minus = propagate_sequence(ground_state(), two_pulse_seq(), -d, NO_RELAXATION)
    before = 10.0
    after = 10.1
    c_plus_after = plus.at(after)[0, 2]
    c_minus_before = minus.at(before)[0, 2]
    c_plus_before = plus.at(before)[0, 2]
    # an instantaneous pi pulse maps rho13 -> conj(rho13); with rho13(-d) = -conj(rho13(+d))
    # the +d atom leaves R carrying the -d atom's (reflected) phase
    assert np.angle(c_plus_after) == pytest.approx(np.angle(np.conj(c_plus_before)), abs=0.05)
    assert np.angle(-c_plus_after) == pytest.approx(np.angle(c_minus_before), abs=0.05)
    assert abs(c_plus_after) == pytest.approx(abs(c_plus_before), rel=1e-3)


def test_empty_sequence_is_free_evolution():
    rho0 = random_state(9, pure=True)
    seq = PulseSequence((), 3.0)
    traj = propagate_sequence(rho0, seq, 0.2, RelaxationParams.reference_defaults())
    assert traj.times[0] == 0 and traj.times[-1] == pytest.approx(3.0)
    for t, s in zip(traj.times, traj.states):
        assert np.allclose(s, propagate_free(rho0, t, 0.2, RelaxationParams.reference_defaults()), atol=1e-14)


@pytest.mark.parametrize("delta", [-0.5, -0.04, 0.0, 0.21, 0.8])
def test_trace_and_hermiticity_preserved(delta):
    traj = propagate_sequence(ground_state(), locked_seq(), delta, RelaxationParams.reference_defaults())
    tr = np.trace(traj.states, axis1=1, axis2=2)
    assert np.max(np.abs(tr - 1)) < 1e-9
    assert hermiticity_defect(traj.states) < 1e-12
    assert np.all(np.diff(traj.times) > 0)


@pytest.mark.parametrize("delta", [0.04, 0.3, 0.77])
def test_detuning_sign_symmetry(delta):
    S = np.diag([1.0, 1.0, -1.0])
    plus = propagate_sequence(ground_state(), locked_seq(), delta, RelaxationParams.reference_defaults())
    minus = propagate_sequence(ground_state(), locked_seq(), -delta, RelaxationParams.reference_defaults())
    assert np.array_equal(plus.times, minus.times)
    mirrored = S @ plus.states.conj() @ S
    assert np.max(np.abs(minus.states - mirrored)) < 1e-12


@pytest.mark.parametrize("delta", [0.0, 0.3])
def test_dt_pulse_convergence(delta):
    relax = RelaxationParams.reference_defaults()
    a = evolve(ground_state(), locked_seq(), delta, relax, dt_pulse=1e-3)
    b = evolve(ground_state(), locked_seq(), delta, relax, dt_pulse=5e-4)
    assert abs(a[0, 2] - b[0, 2]) < 1e-6
