"""Independent checks for the analytic score, FIM and CRB.

Monte-Carlo trials are split into blocks of ``BLOCK_SIZE``. Block ``b`` draws
its noise from ``numpy.random.default_rng([seed, b])`` in trial, snapshot,
element, (real, imaginary) order, so the noise of trial ``i`` depends only on
``(seed, i)`` and the reduction runs in block order.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np

from .fim import (
    assemble_full_fim,
    crb_omega_closed_form,
    crb_omega_full_inverse,
    crb_omega_via_schur,
    fim_blocks,
    score,
    score_from_residuals,
)
from .model import ModelInstance, ObservationSet, draw_complex_normal, log_likelihood

BLOCK_SIZE = 4096

TOLERANCES = {
    # empirical vs analytic FIM, relative Frobenius, at MC_TRIALS trials
    "empirical_fim": 0.05,
    # analytic score vs central differences of the log-likelihood, relative
    "score_fd": 1e-5,
    # pairwise agreement of the three CRB(Omega) paths, relative Frobenius
    "crb_paths": 1e-8,
    # zero-mean score: |mean| within this many standard errors
    "score_mean_z": 4.0,
}
MC_TRIALS = 200_000
FD_RELATIVE_STEP = 1e-6


@dataclass
class OracleReport:
    relative_frobenius_error: float
    trials: int
    tolerance: float
    per_block_errors: Dict[str, float] = field(default_factory=dict)
    applicable: bool = True
    note: str = ""
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if not self.applicable:
            return False
        errors = [self.relative_frobenius_error, *self.per_block_errors.values()]
        return all(e <= self.tolerance for e in errors)

    def as_dict(self):
        return {
            "passed": self.passed,
            "applicable": self.applicable,
            "relative_frobenius_error": self.relative_frobenius_error,
            "trials": self.trials,
            "tolerance": self.tolerance,
            "per_block_errors": dict(self.per_block_errors),
            "note": self.note,
            "diagnostics": dict(self.diagnostics),
        }


def relative_frobenius(x, y) -> float:
    denom = max(np.linalg.norm(x), np.linalg.norm(y))
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(x - y) / denom)


def noise_block(model: ModelInstance, seed: int, block: int, size: int) -> np.ndarray:
    """Compressed noise n = Phi w for ``size`` trials, shape (size, N, N_y)."""
    rng = np.random.default_rng([seed, block])
    w = draw_complex_normal(rng, (size, model.n_snapshots, model.family.n_rows),
                            model.scheme.noise_power)
    return w @ model.scheme.phi.T


def score_moments(model: ModelInstance, trials: int, seed: int):
    """Sample mean, sample covariance about zero E{psi psi^T}, and per-entry
    standard deviation of the score at the true parameters."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    dim = model.layout.size
    total = np.zeros(dim)
    outer = np.zeros((dim, dim))
    for block, start in enumerate(range(0, trials, BLOCK_SIZE)):
        size = min(BLOCK_SIZE, trials - start)
        psi = score_from_residuals(model, noise_block(model, seed, block, size))
        total += psi.sum(axis=0)
        outer += psi.T @ psi
    mean = total / trials
    second = outer / trials
    second = 0.5 * (second + second.T)
    std = np.sqrt(np.maximum(np.diag(second) - mean ** 2, 0.0))
    return mean, second, std


def _block_errors(empirical, analytic, n_amp):
    amp = slice(0, n_amp)
    om = slice(n_amp, None)
    errors = {
        "amplitude": relative_frobenius(empirical[amp, amp], analytic[amp, amp]),
    }
    if analytic.shape[0] > n_amp:
        errors["cross"] = relative_frobenius(empirical[amp, om], analytic[amp, om])
        errors["omega"] = relative_frobenius(empirical[om, om], analytic[om, om])
    return errors


def empirical_fim(model: ModelInstance, trials: int = MC_TRIALS, seed: int = 0):
    """Monte-Carlo E{psi psi^T}; returns ``(matrix, OracleReport)``.

    The report compares against the analytic assembled FIM. Only the overall
    relative error is held to the tolerance; per-block errors go to
    ``diagnostics`` (a small off-diagonal block has a large relative
    Monte-Carlo error).
    """
    _, second, _ = score_moments(model, trials, seed)
    analytic = assemble_full_fim(fim_blocks(model))
    report = OracleReport(
        relative_frobenius_error=relative_frobenius(second, analytic),
        trials=trials,
        tolerance=TOLERANCES["empirical_fim"],
        diagnostics=_block_errors(second, analytic, model.layout.n_amplitude),
    )
    return second, report


def finite_diff_gradient(f: Callable[[np.ndarray], float], theta, steps=None) -> np.ndarray:
    """Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.

    ``steps`` defaults to ``1e-6 * (1 + |theta_i|)``.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if steps is None:
        steps = FD_RELATIVE_STEP * (1.0 + np.abs(theta))
    steps = np.broadcast_to(np.asarray(steps, dtype=float), theta.shape)
    grad = np.empty_like(theta)
    for i, h in enumerate(steps):
        up = theta.copy()
        down = theta.copy()
        up[i] += h
        down[i] -= h
        fu, fd = f(up), f(down)
        if not (np.isfinite(fu) and np.isfinite(fd)):
            raise FloatingPointError(f"non-finite function value at coordinate {i}")
        grad[i] = (fu - fd) / (2.0 * h)
    return grad


def score_fd_check(obs: ObservationSet, model: ModelInstance, theta=None) -> OracleReport:
    theta = model.theta if theta is None else np.asarray(theta, dtype=float)
    analytic = score(obs, model, theta)
    numeric = finite_diff_gradient(lambda th: log_likelihood(obs, model, th), theta)
    denom = max(np.linalg.norm(numeric), np.linalg.norm(analytic))
    err = float(np.linalg.norm(analytic - numeric) / denom) if denom else 0.0
    return OracleReport(err, 0, TOLERANCES["score_fd"])


def crb_cross_check(model: ModelInstance) -> OracleReport:
    """Pairwise agreement of the closed-form, Schur and full-inverse CRB(Omega)."""
    tol = TOLERANCES["crb_paths"]
    blocks = fim_blocks(model)
    results = {
        "closed": crb_omega_closed_form(model),
        "schur": crb_omega_via_schur(blocks),
        "full": crb_omega_full_inverse(blocks),
    }
    if results["closed"].singular is not None and results["closed"].singular.stage == "H":
        return OracleReport(float("nan"), 0, tol, applicable=False, note="H is singular")
    verdicts = {name: r.is_singular for name, r in results.items()}
    if all(verdicts.values()):
        return OracleReport(0.0, 0, tol, note="all paths report a singular CRB")
    if any(verdicts.values()):
        return OracleReport(float("inf"), 0, tol,
                            note=f"inconsistent singular verdicts: {verdicts}")
    pairs = {}
    names = list(results)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            pairs[f"{a}_vs_{b}"] = relative_frobenius(results[a].crb_omega, results[b].crb_omega)
    return OracleReport(max(pairs.values()), 0, tol, per_block_errors=pairs)


def _classical_sum(model: ModelInstance) -> np.ndarray:
    a = model.steering
    proj = np.eye(a.shape[0]) - a @ np.linalg.inv(a.conj().T @ a) @ a.conj().T
    acc = np.zeros((model.n_params, model.n_params))
    for t in range(model.n_snapshots):
        dt = model.derivatives.transpose(1, 0, 2) @ model.snapshots.amplitudes[:, t]
        acc += (dt.conj().T @ proj @ dt).real
    return acc


def classical_doa_information(model: ModelInstance) -> np.ndarray:
    """(2 / sigma^2) sum_t Re{D^H (I - A (A^H A)^-1 A^H) D}.

    Built straight from A and D(t) with the measurement matrix ignored, so it
    is only comparable to the compressed bound when Phi = I.
    """
    return 2.0 / model.scheme.noise_power * _classical_sum(model)


def classical_doa_crb(model: ModelInstance) -> np.ndarray:
    """(sigma^2 / 2) [sum_t Re{D^H (I - A (A^H A)^-1 A^H) D}]^-1."""
    return 0.5 * model.scheme.noise_power * np.linalg.inv(_classical_sum(model))
