import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowrank_crb.doa import UlaConfig, build_doa_family
from lowrank_crb.errors import DimensionMismatch, SingularCovariance
from lowrank_crb.model import (
    MeasurementScheme,
    ModelInstance,
    ObservationSet,
    SnapshotSet,
    assemble_theta,
    generate_observations,
    log_likelihood,
    noise_covariance,
    split_theta,
)

from conftest import random_instance


def test_assemble_theta_scalar():
    theta = assemble_theta(SnapshotSet([[1 + 2j]]), [0.5])
    np.testing.assert_array_equal(theta, [1.0, 2.0, 0.5])


def test_assemble_theta_interleaves_per_snapshot():
    d = np.array([[1 + 2j, 5 + 6j], [3 + 4j, 7 + 8j]])
    theta = assemble_theta(SnapshotSet(d), [9.0, 10.0])
    assert theta.size == 10
    np.testing.assert_array_equal(theta, [1, 3, 2, 4, 5, 7, 6, 8, 9, 10])


def test_theta_length_fig1():
    d = np.ones((11, 10), dtype=complex)
    assert assemble_theta(SnapshotSet(d), np.zeros(11)).size == 231


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_theta_round_trip(k, n, p, seed):
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))
    omega = rng.standard_normal(p)
    snaps, om = split_theta(assemble_theta(SnapshotSet(d), omega), k, n)
    np.testing.assert_array_equal(snaps.amplitudes, d)
    np.testing.assert_array_equal(om, omega)


def test_noise_covariance_identity():
    np.testing.assert_array_equal(noise_covariance(MeasurementScheme(np.eye(4), 2.0)),
                                  2 * np.eye(4))


def test_noise_covariance_single_row():
    np.testing.assert_array_equal(noise_covariance(MeasurementScheme([[1.0, 1.0]], 1.0)),
                                  [[2.0]])


def test_noise_covariance_matches_triple_loop(rng):
    phi = rng.standard_normal((5, 8))
    sigma2 = 0.7
    r = noise_covariance(MeasurementScheme(phi, sigma2))
    expected = np.zeros((5, 5))
    for i in range(5):
        for j in range(5):
            for k in range(8):
                expected[i, j] += sigma2 * phi[i, k] * phi[j, k]
    np.testing.assert_allclose(r, expected, rtol=0, atol=1e-14 * np.abs(expected).max())
    assert np.array_equal(r, r.T)
    assert np.linalg.eigvalsh(r).min() >= -1e-12 * np.linalg.norm(r, 2)


def test_scheme_rejects_rank_deficient_phi():
    with pytest.raises(SingularCovariance):
        MeasurementScheme([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]], 1.0)


def test_scheme_rejects_wide_compression():
    with pytest.raises(DimensionMismatch):
        MeasurementScheme(np.ones((3, 2)), 1.0)


def test_scheme_rejects_nonpositive_noise():
    with pytest.raises(ValueError):
        MeasurementScheme(np.eye(2), 0.0)


def test_model_dimension_checks(rng):
    family = build_doa_family(UlaConfig(6), 2)
    with pytest.raises(DimensionMismatch):
        ModelInstance(family, [0.1, 0.2], SnapshotSet(np.ones((3, 2))),
                      MeasurementScheme(np.eye(6), 1.0))
    with pytest.raises(DimensionMismatch):
        ModelInstance(family, [0.1, 0.2], SnapshotSet(np.ones((2, 2))),
                      MeasurementScheme(np.eye(5), 1.0))
    with pytest.raises(DimensionMismatch):
        ModelInstance(family, [0.1], SnapshotSet(np.ones((2, 2))),
                      MeasurementScheme(np.eye(6), 1.0))


def test_noiseless_limit(rng):
    model = random_instance(rng, noise_power=1e-40)
    y = generate_observations(model, 1).measurements
    expected = model.compressed @ model.snapshots.amplitudes
    np.testing.assert_allclose(y, expected, rtol=0, atol=1e-15)


def test_generation_is_reproducible(rng):
    model = random_instance(rng)
    a = generate_observations(model, 123).measurements
    b = generate_observations(model, 123).measurements
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, generate_observations(model, 124).measurements)


def test_generation_stream_order():
    # snapshot by snapshot, entry by entry, real then imaginary
    n_x, n = 3, 2
    family = build_doa_family(UlaConfig(n_x), 1)
    model = ModelInstance(family, [0.0], SnapshotSet(np.zeros((1, n))),
                          MeasurementScheme(np.eye(n_x), 2.0))
    y = generate_observations(model, 5).measurements
    g = np.random.default_rng(5).standard_normal(2 * n * n_x)
    expected = (g[0::2] + 1j * g[1::2]).reshape(n, n_x).T
    np.testing.assert_array_equal(y, expected)


def test_compressed_noise_covariance_monte_carlo(rng):
    n_x, n_y = 8, 5
    phi = rng.standard_normal((n_y, n_x))
    family = build_doa_family(UlaConfig(n_x), 1)
    draws = 200_000
    model = ModelInstance(family, [0.3], SnapshotSet(np.zeros((1, draws))),
                          MeasurementScheme(phi, 0.8))
    n = generate_observations(model, 99).measurements
    sample = n @ n.conj().T / draws
    r = noise_covariance(model.scheme)
    assert np.linalg.norm(sample - r) / np.linalg.norm(r) < 0.03
    assert np.abs(sample.imag).max() < 0.03 * np.abs(r).max()


def test_entry_variance_monte_carlo():
    n_x, draws = 4, 200_000
    family = build_doa_family(UlaConfig(n_x), 1)
    model = ModelInstance(family, [0.0], SnapshotSet(np.zeros((1, draws))),
                          MeasurementScheme(np.eye(n_x), 1.7))
    w = generate_observations(model, 3).measurements
    power = np.mean(np.abs(w) ** 2, axis=1)
    np.testing.assert_allclose(power, 1.7, rtol=0.02)
    # equal split between real and imaginary parts
    np.testing.assert_allclose(np.mean(w.real ** 2, axis=1), 0.85, rtol=0.02)


def test_log_likelihood_zero_residual(rng):
    model = random_instance(rng)
    y = model.compressed @ model.snapshots.amplitudes
    value = log_likelihood(ObservationSet(y), model, model.theta)
    n_y, n = y.shape
    r = noise_covariance(model.scheme)
    expected = -n_y * n * np.log(np.pi) - n * np.log(np.linalg.det(r))
    assert value == pytest.approx(expected, rel=1e-12)


def test_log_likelihood_scalar_case():
    family = build_doa_family(UlaConfig(1), 1)
    model = ModelInstance(family, [0.0], SnapshotSet([[2.0 + 1.0j]]),
                          MeasurementScheme([[1.0]], 1.0))
    residual = 0.3 - 0.4j
    y = np.array([[2.0 + 1.0j + residual]])
    value = log_likelihood(ObservationSet(y), model, model.theta)
    assert value == pytest.approx(-np.log(np.pi) - abs(residual) ** 2, rel=1e-14)


def literal_log_density(y, b, d, r):
    """ln of the joint complex Gaussian density, written out term by term."""
    n_y, n = y.shape
    r_inv = np.linalg.inv(r)
    expo = 0.0
    for t in range(n):
        e = y[:, t] - b @ d[:, t]
        expo += (e.conj() @ r_inv @ e).real
    density = np.exp(-expo) / (np.pi ** (n_y * n) * np.linalg.det(r) ** n)
    return np.log(density)


def test_log_likelihood_matches_literal_density(rng):
    model = random_instance(rng, n_x=6, n_y=4, k=2, n=3, noise_power=1.5)
    obs = generate_observations(model, 8)
    theta = model.theta + 0.05 * rng.standard_normal(model.layout.size)
    snaps, omega = split_theta(theta, 2, 3)
    b = model.scheme.phi @ model.family.matrix(omega)
    expected = literal_log_density(obs.measurements, b, snaps.amplitudes,
                                   noise_covariance(model.scheme))
    assert log_likelihood(obs, model, theta) == pytest.approx(expected, rel=1e-12)


def test_log_likelihood_large_ny_does_not_overflow():
    n = 400
    scheme = MeasurementScheme(np.eye(n), 1e4)
    family = build_doa_family(UlaConfig(n), 1)
    model = ModelInstance(family, [0.2], SnapshotSet([[1.0]]), scheme)
    y = model.compressed @ model.snapshots.amplitudes
    value = log_likelihood(ObservationSet(y), model, model.theta)
    assert np.isfinite(value)
    assert value == pytest.approx(-n * np.log(np.pi) - n * np.log(1e4), rel=1e-12)


def test_log_likelihood_invariant_to_snapshot_order(rng):
    model = random_instance(rng, n=4)
    obs = generate_observations(model, 2)
    perm = np.array([2, 0, 3, 1])
    permuted = ModelInstance(model.family, model.omega,
                             SnapshotSet(model.snapshots.amplitudes[:, perm]), model.scheme)
    pobs = ObservationSet(obs.measurements[:, perm])
    assert log_likelihood(pobs, permuted, permuted.theta) == pytest.approx(
        log_likelihood(obs, model, model.theta), rel=1e-13)


def test_log_likelihood_checks_theta_length(desk_model):
    obs = generate_observations(desk_model, 0)
    with pytest.raises(DimensionMismatch):
        log_likelihood(obs, desk_model, desk_model.theta[:-1])
