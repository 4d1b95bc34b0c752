import time
import warnings

import pytest
from hypothesis import settings

from pdspec import bounds, spectrum, substitution, transport

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def estimate():
    """Level-10 bands of the default potential with 20 audit energies."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spectrum.CoarseGridWarning)
        return spectrum.estimate_spectrum()


@pytest.fixture(scope="session")
def audit_energies(estimate):
    return estimate.samples


@pytest.fixture(scope="session")
def ledger(estimate):
    return bounds.constants_from_C(estimate.C_emp, bounds.norm_suprema(estimate.samples))


@pytest.fixture(scope="session")
def timed_default_series():
    """Second moment of the default potential on [-1024, 1024], t from 1 to 1e3,
    with the seconds it took."""
    t0 = time.perf_counter()
    H = transport.build_hamiltonian(substitution.fixed_point_window(-1024, 2049))
    series = transport.moment_series(H, 2, transport.t_grid(1.0, 1e3))
    return series, time.perf_counter() - t0


@pytest.fixture(scope="session")
def default_series(timed_default_series):
    return timed_default_series[0]


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    log = getattr(pytestconfig, "_acceptance_lines", None)
    if log is None:
        log = pytestconfig._acceptance_lines = {}
    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
