import math

import pytest

from phaselock_echo import Experiment, ProtocolParams, RelaxationParams, SequenceKind, gaussian_grid

PI = math.pi


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def record(request):
    """Append a one-line PASS/FAIL verdict to the acceptance summary."""

    def _record(criterion, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
        request.config._acceptance_lines.append(line)
        print(line)
        return ok

    return _record


@pytest.fixture(scope="session")
def ref_grid():
    return gaussian_grid(0.68, 0.01, 161)


@pytest.fixture(scope="session")
def ref_relax():
    return RelaxationParams.reference_defaults()


@pytest.fixture(scope="session")
def fig1c(ref_grid, ref_relax):
    return Experiment(SequenceKind.PHASE_LOCKED, ProtocolParams(t_end=65.0), ref_grid, ref_relax)
