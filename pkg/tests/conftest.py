import numpy as np
import pytest

from lowrank_crb.doa import UlaConfig, build_doa_family
from lowrank_crb.model import MeasurementScheme, ModelInstance, SnapshotSet


def random_angles(rng, k, min_sep_deg=8.0, span_deg=60.0):
    while True:
        deg = np.sort(rng.uniform(-span_deg, span_deg, k))
        if k == 1 or np.min(np.diff(deg)) >= min_sep_deg:
            return np.deg2rad(deg)


def random_instance(rng, n_x=8, n_y=5, k=2, n=2, noise_power=None, phi=None):
    """DOA instance with a Gaussian Phi and unit-power complex amplitudes."""
    family = build_doa_family(UlaConfig(n_x, 0.5), k)
    omega = random_angles(rng, k)
    d = (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))) / np.sqrt(2)
    if phi is None:
        phi = rng.standard_normal((n_y, n_x)) / np.sqrt(n_x)
    if noise_power is None:
        noise_power = rng.uniform(0.2, 2.0)
    return ModelInstance(family, omega, SnapshotSet(d), MeasurementScheme(phi, noise_power))


@pytest.fixture
def rng():
    return np.random.default_rng(20140101)


@pytest.fixture
def desk_model(rng):
    return random_instance(rng, n_x=8, n_y=5, k=2, n=2)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
