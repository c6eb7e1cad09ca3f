"""Compressed low-rank signal model.

    x(t) = A(Omega) d(t),     y(t) = Phi (x(t) + w(t)),     w(t) ~ CN(0, sigma^2 I)

so the compressed noise n(t) = Phi w(t) is CN(0, R) with R = sigma^2 Phi Phi^T.

The real parameter vector is laid out snapshot by snapshot,

    theta = [Re d(1), Im d(1), ..., Re d(N), Im d(N), Omega],

and every index computation in the package goes through :class:`ParameterLayout`.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import linalg

from ._linalg import numerical_rank
from .errors import DimensionMismatch, SingularCovariance


@dataclass(frozen=True, eq=False)
class ParametricMatrixFamily:
    """A structured N_x x K complex matrix A(Omega) with P real parameters.

    ``evaluate(omega)`` returns A, ``derivative(omega, p)`` returns dA/domega_p.
    ``n_params`` may be 0 for a fully known A.
    """

    n_rows: int
    n_cols: int
    n_params: int
    evaluate: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    derivative: Callable[[np.ndarray, int], np.ndarray] = field(repr=False)

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1 or self.n_params < 0:
            raise ValueError("n_rows and n_cols must be positive, n_params non-negative")

    def _check_omega(self, omega):
        omega = np.asarray(omega, dtype=float).reshape(-1)
        if omega.shape != (self.n_params,):
            raise DimensionMismatch(
                f"omega has {omega.size} entries, family expects {self.n_params}")
        return omega

    def matrix(self, omega) -> np.ndarray:
        omega = self._check_omega(omega)
        a = np.asarray(self.evaluate(omega), dtype=complex)
        if a.shape != (self.n_rows, self.n_cols):
            raise DimensionMismatch(f"evaluate returned shape {a.shape}")
        return a

    def derivatives(self, omega) -> np.ndarray:
        """All parameter derivatives stacked as a (P, N_x, K) array."""
        omega = self._check_omega(omega)
        out = np.zeros((self.n_params, self.n_rows, self.n_cols), dtype=complex)
        for p in range(self.n_params):
            dp = np.asarray(self.derivative(omega, p), dtype=complex)
            if dp.shape != (self.n_rows, self.n_cols):
                raise DimensionMismatch(f"derivative {p} returned shape {dp.shape}")
            out[p] = dp
        return out


def fixed_family(a) -> ParametricMatrixFamily:
    """Family with no unknown parameters (A fully known, P = 0)."""
    a = np.array(a, dtype=complex)
    a.setflags(write=False)

    def _derivative(omega, p):
        raise IndexError("fixed family has no parameters")

    return ParametricMatrixFamily(a.shape[0], a.shape[1], 0, lambda omega: a, _derivative)


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """Source amplitudes; column t is d(t)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        d = np.array(self.amplitudes, dtype=complex)
        if d.ndim != 2 or 0 in d.shape:
            raise DimensionMismatch("amplitudes must be a non-empty K x N matrix")
        d.setflags(write=False)
        object.__setattr__(self, "amplitudes", d)

    @property
    def n_sources(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.amplitudes.shape[1]


@dataclass(frozen=True, eq=False)
class MeasurementScheme:
    """Real compression matrix Phi (N_y x N_x) and ambient noise power sigma^2.

    R = sigma^2 Phi Phi^T must be invertible, so Phi must have full row rank;
    this is checked at construction.
    """

    phi: np.ndarray
    noise_power: float

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim == 1:
            phi = phi[None, :]
        if phi.ndim != 2:
            raise DimensionMismatch("phi must be a 2-D matrix")
        n_y, n_x = phi.shape
        if n_y > n_x:
            raise DimensionMismatch(f"phi has N_y={n_y} > N_x={n_x}")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")
        rank = numerical_rank(phi)
        if rank < n_y:
            raise SingularCovariance(
                f"rank(Phi)={rank} < N_y={n_y}; R = sigma^2 Phi Phi^T is singular")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "noise_power", float(self.noise_power))

    @property
    def n_measurements(self) -> int:
        return self.phi.shape[0]

    @property
    def n_ambient(self) -> int:
        return self.phi.shape[1]

    @cached_property
    def covariance(self) -> np.ndarray:
        r = self.noise_power * (self.phi @ self.phi.T)
        return 0.5 * (r + r.T)

    @cached_property
    def cholesky(self) -> np.ndarray:
        """Lower-triangular L with R = L L^T."""
        try:
            return linalg.cholesky(self.covariance, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularCovariance(str(exc)) from exc

    def whiten(self, x) -> np.ndarray:
        """L^{-1} x, so that (L^{-1}x)^H (L^{-1}y) = x^H R^{-1} y."""
        return linalg.solve_triangular(self.cholesky, x, lower=True)

    def solve(self, x) -> np.ndarray:
        """R^{-1} x."""
        return linalg.cho_solve((self.cholesky, True), x)

    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.cholesky))))


def noise_covariance(scheme: MeasurementScheme) -> np.ndarray:
    """R = sigma^2 Phi Phi^T (symmetric, positive definite by construction)."""
    return scheme.covariance.copy()


@dataclass(frozen=True)
class ParameterLayout:
    """Index map for theta = [Re d(1), Im d(1), ..., Re d(N), Im d(N), Omega]."""

    n_sources: int
    n_snapshots: int
    n_params: int

    @property
    def size(self) -> int:
        return 2 * self.n_snapshots * self.n_sources + self.n_params

    @property
    def n_amplitude(self) -> int:
        return 2 * self.n_snapshots * self.n_sources

    def real(self, t: int) -> slice:
        start = 2 * t * self.n_sources
        return slice(start, start + self.n_sources)

    def imag(self, t: int) -> slice:
        start = (2 * t + 1) * self.n_sources
        return slice(start, start + self.n_sources)

    def snapshot(self, t: int) -> slice:
        """Both real and imaginary entries of snapshot t."""
        start = 2 * t * self.n_sources
        return slice(start, start + 2 * self.n_sources)

    @property
    def omega(self) -> slice:
        return slice(self.n_amplitude, self.size)


def assemble_theta(snapshots: SnapshotSet, omega) -> np.ndarray:
    d = snapshots.amplitudes
    omega = np.asarray(omega, dtype=float).reshape(-1)
    pairs = np.stack([d.real.T, d.imag.T], axis=1)  # (N, 2, K)
    return np.concatenate([pairs.reshape(-1), omega])


def split_theta(theta, n_sources: int, n_snapshots: int):
    """Inverse of :func:`assemble_theta`; returns ``(SnapshotSet, omega)``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    n_amp = 2 * n_sources * n_snapshots
    if theta.size < n_amp:
        raise DimensionMismatch(f"theta has {theta.size} entries, need at least {n_amp}")
    pairs = theta[:n_amp].reshape(n_snapshots, 2, n_sources)
    d = (pairs[:, 0, :] + 1j * pairs[:, 1, :]).T
    return SnapshotSet(d), theta[n_amp:].copy()


@dataclass(frozen=True, eq=False)
class ModelInstance:
    """Family, true Omega, frozen amplitudes and measurement scheme."""

    family: ParametricMatrixFamily
    omega: np.ndarray
    snapshots: SnapshotSet
    scheme: MeasurementScheme

    def __post_init__(self):
        omega = self.family._check_omega(self.omega)
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        if self.family.n_cols != self.snapshots.n_sources:
            raise DimensionMismatch(
                f"family has K={self.family.n_cols} columns, amplitudes have "
                f"{self.snapshots.n_sources} rows")
        if self.family.n_rows != self.scheme.n_ambient:
            raise DimensionMismatch(
                f"family has N_x={self.family.n_rows} rows, Phi has "
                f"{self.scheme.n_ambient} columns")

    @property
    def n_sources(self) -> int:
        return self.family.n_cols

    @property
    def n_snapshots(self) -> int:
        return self.snapshots.n_snapshots

    @property
    def n_params(self) -> int:
        return self.family.n_params

    @property
    def n_measurements(self) -> int:
        return self.scheme.n_measurements

    @cached_property
    def layout(self) -> ParameterLayout:
        return ParameterLayout(self.n_sources, self.n_snapshots, self.n_params)

    @cached_property
    def steering(self) -> np.ndarray:
        return self.family.matrix(self.omega)

    @cached_property
    def compressed(self) -> np.ndarray:
        """B = Phi A."""
        return self.scheme.phi @ self.steering

    @cached_property
    def derivatives(self) -> np.ndarray:
        return self.family.derivatives(self.omega)

    @property
    def theta(self) -> np.ndarray:
        return assemble_theta(self.snapshots, self.omega)

    def with_scheme(self, scheme: MeasurementScheme) -> "ModelInstance":
        return ModelInstance(self.family, self.omega, self.snapshots, scheme)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Compressed measurements; column t is y(t)."""

    measurements: np.ndarray

    def __post_init__(self):
        y = np.array(self.measurements, dtype=complex)
        if y.ndim != 2:
            raise DimensionMismatch("measurements must be an N_y x N matrix")
        y.setflags(write=False)
        object.__setattr__(self, "measurements", y)


def draw_complex_normal(rng: np.random.Generator, shape, power: float) -> np.ndarray:
    """CN(0, power) samples, power split equally between real and imaginary parts.

    Standard normals are drawn in C order over ``shape + (2,)``: the last
    index runs fastest and is (real, imaginary).
    """
    g = rng.standard_normal(tuple(shape) + (2,))
    return np.sqrt(power / 2.0) * (g[..., 0] + 1j * g[..., 1])


def generate_observations(model: ModelInstance, seed: int) -> ObservationSet:
    """y(t) = Phi (A d(t) + w(t)) with w drawn from ``numpy.random.default_rng(seed)``.

    Noise stream order: snapshot by snapshot, entry by entry, real then imaginary.
    """
    rng = np.random.default_rng(seed)
    w = draw_complex_normal(rng, (model.n_snapshots, model.family.n_rows),
                            model.scheme.noise_power).T
    x = model.steering @ model.snapshots.amplitudes
    return ObservationSet(model.scheme.phi @ (x + w))


def _check_observations(obs: ObservationSet, model: ModelInstance):
    expected = (model.n_measurements, model.n_snapshots)
    if obs.measurements.shape != expected:
        raise DimensionMismatch(
            f"observations have shape {obs.measurements.shape}, model expects {expected}")


def residuals(obs: ObservationSet, model: ModelInstance, theta) -> tuple:
    """Return ``(n, B, d, omega)`` where n(t) = y(t) - B(omega) d(t) at ``theta``."""
    _check_observations(obs, model)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != model.layout.size:
        raise DimensionMismatch(
            f"theta has {theta.size} entries, model expects {model.layout.size}")
    snaps, omega = split_theta(theta, model.n_sources, model.n_snapshots)
    b = model.scheme.phi @ model.family.matrix(omega)
    d = snaps.amplitudes
    return obs.measurements - b @ d, b, d, omega


def log_likelihood(obs: ObservationSet, model: ModelInstance, theta) -> float:
    """Gaussian log-likelihood of the compressed measurements at ``theta``.

    ``model`` supplies the family and the measurement scheme; the amplitudes and
    Omega are taken from ``theta``.
    """
    n, _, _, _ = residuals(obs, model, theta)
    scheme = model.scheme
    n_y, n_snap = n.shape
    z = scheme.whiten(n)
    quad = float(np.sum(z.real ** 2 + z.imag ** 2))
    return -n_y * n_snap * np.log(np.pi) - n_snap * scheme.log_det() - quad
