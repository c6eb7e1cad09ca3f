"""Steering-matrix families for direction-of-arrival and line-spectrum models.

Both models share a(omega)_n = exp(-j n phase(omega)), n = 0..N_x-1:

* uniform linear array: phase(omega) = 2 pi (d/lambda) sin(omega), omega in radians;
* line spectrum (uniformly sampled sinusoids): phase(omega) = omega.

With P = K parameters, dA/domega_p is zero except column p, which holds
c(omega_p) = da/domega, so D(t) = C diag(d(t)).
"""

from dataclasses import dataclass

import numpy as np

from .model import ParametricMatrixFamily


@dataclass(frozen=True)
class UlaConfig:
    n_elements: int
    spacing_ratio: float = 0.5  # d / lambda

    def __post_init__(self):
        if self.n_elements < 1:
            raise ValueError("n_elements must be positive")
        if not self.spacing_ratio > 0:
            raise ValueError("spacing_ratio must be positive")

    def phase(self, omega):
        return 2 * np.pi * self.spacing_ratio * np.sin(omega)

    def phase_derivative(self, omega):
        return 2 * np.pi * self.spacing_ratio * np.cos(omega)


@dataclass(frozen=True)
class LineSpectrumConfig:
    """Uniformly sampled complex sinusoids; omega is the normalized angular frequency."""

    n_elements: int

    def __post_init__(self):
        if self.n_elements < 1:
            raise ValueError("n_elements must be positive")

    def phase(self, omega):
        return np.asarray(omega, dtype=float)

    def phase_derivative(self, omega):
        return np.ones_like(np.asarray(omega, dtype=float))


def _element_index(cfg):
    return np.arange(cfg.n_elements)


def ula_steering(cfg, omega) -> np.ndarray:
    """a(omega); accepts a scalar (returns an N_x vector) or an array of angles
    (returns an N_x x len(omega) matrix)."""
    omega = np.asarray(omega, dtype=float)
    n = _element_index(cfg)
    return np.exp(-1j * np.multiply.outer(n, cfg.phase(omega)))


def ula_steering_derivative(cfg, omega) -> np.ndarray:
    """c(omega) = da/domega, same shape convention as :func:`ula_steering`."""
    omega = np.asarray(omega, dtype=float)
    n = _element_index(cfg)
    return -1j * np.multiply.outer(n, cfg.phase_derivative(omega)) * ula_steering(cfg, omega)


def build_doa_family(cfg, n_sources: int) -> ParametricMatrixFamily:
    if n_sources < 1:
        raise ValueError("n_sources must be at least 1")

    def evaluate(omega):
        return ula_steering(cfg, omega)

    def derivative(omega, p):
        out = np.zeros((cfg.n_elements, n_sources), dtype=complex)
        out[:, p] = ula_steering_derivative(cfg, omega[p])
        return out

    return ParametricMatrixFamily(cfg.n_elements, n_sources, n_sources, evaluate, derivative)
