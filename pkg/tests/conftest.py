import pytest

from fhe_iosim.presets import load_registry
from fhe_iosim.workload import generate_trace


@pytest.fixture(scope="session")
def reg():
    return load_registry()


@pytest.fixture(scope="session")
def small_traces(reg):
    """A 1000-op trace per shipped profile, at the profile's accelerator clock."""
    out = {}
    for key, profile in reg.profiles.items():
        clock = reg.get_accelerator(profile.accel_name).clock_hz
        out[key] = generate_trace(profile, 1000, seed=3, clock_hz=clock)
    return out


@pytest.fixture(scope="session")
def tables(reg):
    from fhe_iosim.experiments import EXPERIMENT_IDS, run_experiment

    return {eid: run_experiment(eid, reg) for eid in EXPERIMENT_IDS}


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
