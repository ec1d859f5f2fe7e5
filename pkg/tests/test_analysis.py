import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phaselock_echo.analysis import (
    DegenerateFit,
    EchoReport,
    Experiment,
    SweepAxis,
    detect_echo,
    fit_decay,
    reference_echo,
    run_echo,
    run_sweep,
    signed_efficiency,
    spin_width,
    sweep_point,
)
from phaselock_echo.core import SequenceKind
from phaselock_echo.ensemble import MacroscopicSignal, Sampling
from phaselock_echo.protocol import ProtocolParams, build_two_pulse

PI = math.pi


# --- fit_decay / spin_width --------------------------------------------------


def test_fit_recovers_synthetic_tau():
    pts = [(t, 2.0 * math.exp(-2 * t / 9.0)) for t in (2, 5, 8, 11)]
    fit = fit_decay(pts)
    assert fit.tau == pytest.approx(9.0, abs=1e-9)
    assert fit.I0 == pytest.approx(2.0, rel=1e-9)
    assert fit.residual < 1e-12
    assert fit(5.0) == pytest.approx(pts[1][1], rel=1e-9)


@given(st.floats(0.5, 100), st.floats(1e-6, 10), st.lists(st.floats(0, 50), min_size=3, max_size=8, unique=True))
@settings(max_examples=60)
def test_fit_exact_on_noiseless_data(tau, i0, ts):
    if np.ptp(ts) < 0.1:
        return
    fit = fit_decay([(t, i0 * math.exp(-2 * t / tau)) for t in ts])
    assert fit.tau == pytest.approx(tau, rel=1e-6)


@pytest.mark.parametrize("pts", [
    [(1, 1.0), (2, 0.5)],
    [(1, 1.0), (2, 0.0), (3, 0.1)],
    [(1, 1.0), (2, -0.5), (3, 0.1)],
    [(1, 1.0), (1, 0.5), (1, 0.1)],
    [(1, 1.0), (2, math.nan), (3, 0.1)],
])
def test_fit_rejects_bad_input(pts):
    with pytest.raises(ValueError):
        fit_decay(pts)


def test_fit_rejects_growth():
    with pytest.raises(DegenerateFit):
        fit_decay([(1, 0.1), (2, 0.2), (3, 0.4)])


def test_spin_width_examples():
    assert spin_width(9.0) == pytest.approx(35.37, abs=0.01)
    assert spin_width(10.6) == pytest.approx(30.03, abs=0.01)
    assert spin_width(math.inf) == 0.0
    with pytest.raises(ValueError):
        spin_width(0.0)


# --- signed_efficiency / detect_echo ----------------------------------------


def test_efficiency_identity_and_sign():
    ref = EchoReport(15.0, 0.26j, (0, 1))
    assert signed_efficiency(ref, ref) == 1.0
    assert signed_efficiency(EchoReport(60.0, 0.26j, (0, 1)), ref) == 1.0
    assert signed_efficiency(EchoReport(60.0, -0.13j, (0, 1)), ref) == pytest.approx(-0.5)
    assert signed_efficiency(EchoReport(60.0, 0.26, (0, 1)), ref) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        signed_efficiency(ref, EchoReport(15.0, 0j, (0, 1)))


def test_detect_zero_signal_flags_edge():
    t = np.arange(0, 10, 0.01)
    rep = detect_echo(MacroscopicSignal(t, np.zeros_like(t, dtype=complex)), (2.0, 8.0))
    assert rep.edge_peak


def test_detect_refines_peak_between_samples():
    t = np.arange(0, 20, 0.01)
    t0 = 12.3456
    P = 0.3j * np.exp(-((t - t0) / 0.4) ** 2)
    rep = detect_echo(MacroscopicSignal(t, P), (10.0, 15.0))
    assert not rep.edge_peak
    assert rep.t_peak == pytest.approx(t0, abs=1e-4)
    assert abs(rep.amplitude) == pytest.approx(0.3, rel=1e-4)
    assert abs(rep.amplitude.real) < 1e-15


def test_detect_monotone_signal_flags_edge():
    t = np.arange(0, 10, 0.01)
    rep = detect_echo(MacroscopicSignal(t, t.astype(complex)), (2.0, 8.0))
    assert rep.edge_peak and rep.t_peak == pytest.approx(8.0)


def test_detect_rejects_window_over_pulse():
    seq = build_two_pulse(ProtocolParams())
    t = np.arange(0, 20, 0.01)
    sig = MacroscopicSignal(t, np.ones_like(t, dtype=complex))
    with pytest.raises(ValueError, match="overlaps"):
        detect_echo(sig, (9.0, 12.0), seq)
    with pytest.raises(ValueError):
        detect_echo(sig, (30.0, 40.0))


# --- experiments -------------------------------------------------------------


def test_two_pulse_echo_time(ref_grid, ref_relax):
    exp = Experiment(SequenceKind.TWO_PULSE, ProtocolParams(), ref_grid, ref_relax)
    _, echo = run_echo(exp)
    assert echo.t_peak == pytest.approx(15.0, abs=0.2)
    assert not echo.edge_peak


@pytest.mark.parametrize("area_D", [PI / 8, PI / 4])
def test_efficiency_independent_of_d_area(area_D, ref_grid, ref_relax):
    params = ProtocolParams(area_D=area_D, t_end=65.0)
    exp = Experiment(SequenceKind.PHASE_LOCKED, params, ref_grid, ref_relax, Sampling(5e-4, 0.01))
    eff = signed_efficiency(run_echo(exp)[1], reference_echo(exp))
    assert eff == pytest.approx(0.9968, abs=0.02)


def test_sweep_point_axes():
    exp = Experiment(SequenceKind.PHASE_LOCKED, ProtocolParams())
    p = sweep_point(exp, SweepAxis.R_DELAY, 20.0).params
    assert (p.T_R, p.T_B1, p.T_B2) == pytest.approx((20.0, 20.1, 65.0))
    p = sweep_point(exp, SweepAxis.LOCK_DURATION, 10.0).params
    assert p.T_B2 == pytest.approx(20.1)
    p = sweep_point(exp, SweepAxis.B1_DELAY, 2.0).params
    assert (p.T_B1, p.T_B2) == pytest.approx((12.0, 56.9))
    assert sweep_point(exp, SweepAxis.B2_AREA, PI).params.area_B2 == PI
    with pytest.raises(ValueError):
        sweep_point(Experiment(SequenceKind.TWO_PULSE, ProtocolParams()), SweepAxis.B2_AREA, PI)
    assert SweepAxis.parse("B2_AREA") is SweepAxis.B2_AREA
    with pytest.raises(ValueError):
        SweepAxis.parse("nope")


def test_sweep_records_skipped_points(ref_grid, ref_relax):
    exp = Experiment(SequenceKind.PHASE_LOCKED, ProtocolParams(T_B2=20.0), ref_grid, ref_relax,
                     reference_T_R=10.0)
    rows = run_sweep(exp, "b1-delay", [0.1, 6.0, 2.0])
    assert [r.value for r in rows] == [0.1, 6.0, 2.0]
    assert rows[1].echo is None and "LOCK_TOO_LATE" in rows[1].error
    assert rows[0].efficiency is not None and rows[2].efficiency is not None


def test_sweep_threads_match_serial(ref_grid, ref_relax):
    exp = Experiment(SequenceKind.TWO_PULSE, ProtocolParams(), ref_grid, ref_relax)
    a = run_sweep(exp, SweepAxis.R_DELAY, [10.0, 12.0, 14.0])
    b = run_sweep(exp, SweepAxis.R_DELAY, [10.0, 12.0, 14.0], threads=3)
    assert a == b
    assert a[0].efficiency == 1.0
