"""Three-level ensemble simulator for phase-locked photon echoes."""

__version__ = "0.1.0"

from .analysis import (
    DecayFit,
    EchoReport,
    Experiment,
    SweepAxis,
    detect_echo,
    fit_decay,
    run_echo,
    run_sweep,
    signed_efficiency,
    spin_width,
)
from .core import (
    AtomGroup,
    EnsembleGrid,
    Pulse,
    PulseSequence,
    RelaxationParams,
    SequenceKind,
    Transition,
    gaussian_grid,
    ground_state,
    pulse_area,
    validate_sequence,
)
from .ensemble import MacroscopicSignal, Sampling, bloch_uv, per_group_trajectories, simulate_ensemble
from .integrator import (
    DriveSnapshot,
    IntegrationDiverged,
    Trajectory,
    propagate_free,
    propagate_pulsed,
    propagate_sequence,
    rhs,
)
from .protocol import (
    AreaClass,
    ProtocolError,
    ProtocolParams,
    build_phase_locked,
    build_two_pulse,
    classify_areas,
    phase_match,
    predict_echo_time,
)

__all__ = [
    "AreaClass",
    "AtomGroup",
    "bloch_uv",
    "build_phase_locked",
    "build_two_pulse",
    "classify_areas",
    "DecayFit",
    "detect_echo",
    "DriveSnapshot",
    "EchoReport",
    "EnsembleGrid",
    "Experiment",
    "fit_decay",
    "gaussian_grid",
    "ground_state",
    "IntegrationDiverged",
    "MacroscopicSignal",
    "per_group_trajectories",
    "phase_match",
    "predict_echo_time",
    "propagate_free",
    "propagate_pulsed",
    "propagate_sequence",
    "ProtocolError",
    "ProtocolParams",
    "Pulse",
    "pulse_area",
    "PulseSequence",
    "RelaxationParams",
    "rhs",
    "run_echo",
    "run_sweep",
    "Sampling",
    "SequenceKind",
    "signed_efficiency",
    "simulate_ensemble",
    "spin_width",
    "SweepAxis",
    "Trajectory",
    "Transition",
    "validate_sequence",
]
