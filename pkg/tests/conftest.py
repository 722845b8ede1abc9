import math

import numpy as np
import pytest
from hypothesis import settings

from timebin_ebit.fock import DensityMatrix, FockTruncation

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ETA = 0.605
H = 1 / math.sqrt(2)


def random_density(rng: np.random.Generator, trunc: FockTruncation, rank=None) -> DensityMatrix:
    rank = trunc.dim if rank is None else rank
    a = rng.normal(size=(trunc.dim, rank)) + 1j * rng.normal(size=(trunc.dim, rank))
    rho = a @ a.conj().T
    return DensityMatrix.from_matrix(rho, trunc)


@pytest.fixture
def trunc():
    return FockTruncation(4)


DEFAULT_SEED = 20050101


@pytest.fixture(scope="session")
def scan_zero():
    """10^6 events, eta = 0.605, phase 0, 100 settings over [0, pi]."""
    from timebin_ebit.homodyne import ScanConfig, run_scan
    return run_scan(ScanConfig(n_samples=10**6, eta=ETA, seed=DEFAULT_SEED, state_phase=0.0))


@pytest.fixture(scope="session")
def scan_pi():
    from timebin_ebit.homodyne import ScanConfig, run_scan
    return run_scan(ScanConfig(n_samples=10**6, eta=ETA, seed=DEFAULT_SEED, state_phase=math.pi))


@pytest.fixture(scope="session")
def ml_zero_timed(scan_zero):
    """ML result for the phase-0 scan together with its wall-clock seconds."""
    import time
    from timebin_ebit.tomography import ml_reconstruct
    t0 = time.perf_counter()
    res = ml_reconstruct(scan_zero)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def ml_zero(ml_zero_timed):
    return ml_zero_timed[0]


@pytest.fixture(scope="session")
def ml_pi(scan_pi):
    from timebin_ebit.tomography import ml_reconstruct
    return ml_reconstruct(scan_pi)


@pytest.fixture(scope="session")
def pattern_zero(scan_zero):
    from timebin_ebit.tomography import ReconstructionConfig, pattern_reconstruct
    return pattern_reconstruct(scan_zero, ReconstructionConfig(method="pattern_function"))


ACCEPTANCE_LINES: list = []


@pytest.fixture
def acceptance_line():
    def record(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number} {title}: {'PASS' if ok else 'FAIL'} {detail}"
        print(line)
        ACCEPTANCE_LINES.append((number, line))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
