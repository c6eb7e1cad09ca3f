"""Score, Fisher information and Cramer-Rao bounds for the compressed model.

Blocks of the real FIM:

    H       = 2 B^H R^-1 B                                  (K x K, Hermitian)
    Delta_t = 2 B^H R^-1 Phi D(t)                           (K x P)
    Gamma   = 2 sum_t Re{D(t)^H Phi^T R^-1 Phi D(t)}         (P x P)

with D(t) = [dA/domega_1 d(t), ..., dA/domega_P d(t)].

Three routes to CRB(Omega) are provided. :func:`crb_omega_closed_form` is the
production path; :func:`crb_omega_via_schur` and :func:`crb_omega_full_inverse`
exist for cross-validation.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from ._linalg import equilibrate, hermitian_part, numerical_rank, singular_values
from .errors import DimensionMismatch, SingularInformation
from .model import (
    ModelInstance,
    ObservationSet,
    ParametricMatrixFamily,
    residuals,
)


def build_D(family: ParametricMatrixFamily, omega, d_t) -> np.ndarray:
    """D(t) = [dA/domega_1 d(t), ..., dA/domega_P d(t)], shape (N_x, P)."""
    d_t = np.asarray(d_t, dtype=complex).reshape(-1)
    if d_t.size != family.n_cols:
        raise DimensionMismatch(f"d(t) has {d_t.size} entries, family has K={family.n_cols}")
    return (family.derivatives(omega) @ d_t).T


def _all_D(derivs: np.ndarray, amplitudes: np.ndarray) -> np.ndarray:
    # (P, N_x, K) x (K, N) -> (N, N_x, P)
    return np.einsum("pik,kt->tip", derivs, amplitudes)


def score_from_residuals(model: ModelInstance, n, b=None, derivs=None, amplitudes=None):
    """Score for a batch of residual sets.

    Args:
        model: supplies the measurement scheme and layout.
        n: residuals n(t) = y(t) - B d(t), shape (batch, N, N_y).
        b, derivs, amplitudes: B, dA/domega and d evaluated at the point where the
            score is wanted. Default to the model's true values.

    Returns:
        Real array of shape (batch, 2NK + P).
    """
    b = model.compressed if b is None else b
    derivs = model.derivatives if derivs is None else derivs
    amplitudes = model.snapshots.amplitudes if amplitudes is None else amplitudes
    scheme = model.scheme
    batch, n_snap, n_y = n.shape

    rn = scheme.solve(n.reshape(-1, n_y).T).T.reshape(batch, n_snap, n_y)
    g = np.einsum("yk,bty->btk", b.conj(), rn)
    amp = 2.0 * np.stack([g.real, g.imag], axis=2).reshape(batch, -1)

    d_all = _all_D(derivs, amplitudes)
    q = rn @ scheme.phi  # Phi^T R^-1 n(t), shape (batch, N, N_x)
    om = 2.0 * np.einsum("txp,btx->bp", d_all.conj(), q).real
    return np.concatenate([amp, om], axis=1)


def score(obs: ObservationSet, model: ModelInstance, theta) -> np.ndarray:
    """Gradient of the log-likelihood with respect to theta."""
    n, b, d, omega = residuals(obs, model, theta)
    derivs = model.family.derivatives(omega)
    return score_from_residuals(model, n.T[None], b, derivs, d)[0]


@dataclass(frozen=True, eq=False)
class FimBlocks:
    h: np.ndarray        # (K, K) complex Hermitian
    deltas: np.ndarray   # (N, K, P) complex
    gamma: np.ndarray    # (P, P) real symmetric

    @property
    def n_sources(self) -> int:
        return self.h.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.deltas.shape[0]

    @property
    def n_params(self) -> int:
        return self.gamma.shape[0]


def _whitened(model: ModelInstance):
    """L^-1 B and L^-1 Phi D(t) for all t, with R = L L^T."""
    scheme = model.scheme
    bw = scheme.whiten(model.compressed)
    d_all = _all_D(model.derivatives, model.snapshots.amplitudes)
    n_snap, n_x, n_p = d_all.shape
    phid = np.einsum("yx,txp->ytp", scheme.phi, d_all).reshape(scheme.n_measurements, -1)
    gw = scheme.whiten(phid).reshape(scheme.n_measurements, n_snap, n_p).transpose(1, 0, 2)
    return bw, gw


def _gamma(gw: np.ndarray) -> np.ndarray:
    g = 2.0 * np.einsum("typ,tyq->pq", gw.conj(), gw).real
    return 0.5 * (g + g.T)


def fim_blocks(model: ModelInstance) -> FimBlocks:
    bw, gw = _whitened(model)
    h = hermitian_part(2.0 * bw.conj().T @ bw)
    deltas = 2.0 * np.einsum("yk,typ->tkp", bw.conj(), gw)
    return FimBlocks(h, deltas, _gamma(gw))


def real_block(h: np.ndarray) -> np.ndarray:
    """[[Re H, -Im H], [Im H, Re H]], the real form of a complex matrix."""
    return np.block([[h.real, -h.imag], [h.imag, h.real]])


def assemble_full_fim(blocks: FimBlocks) -> np.ndarray:
    """Real (2NK+P) x (2NK+P) FIM in the canonical parameter layout."""
    k, n_snap, n_p = blocks.n_sources, blocks.n_snapshots, blocks.n_params
    n_amp = 2 * k * n_snap
    fim = np.zeros((n_amp + n_p, n_amp + n_p))
    hr = real_block(blocks.h)
    for t in range(n_snap):
        s = slice(2 * k * t, 2 * k * (t + 1))
        fim[s, s] = hr
        border = np.vstack([blocks.deltas[t].real, blocks.deltas[t].imag])
        fim[s, n_amp:] = border
        fim[n_amp:, s] = border.T
    fim[n_amp:, n_amp:] = blocks.gamma
    return 0.5 * (fim + fim.T)


@dataclass(frozen=True)
class Singular:
    """Why a bound could not be formed.

    ``stage`` is ``"H"`` when the amplitude block is not invertible,
    ``"information"`` when CRB^-1(Omega) itself is, and ``"fim"`` when the full
    FIM is singular.
    """

    stage: str
    rank: int
    min_singular_value: float


@dataclass(frozen=True, eq=False)
class CrbResult:
    """CRB for Omega, or a singular verdict.

    ``information`` is CRB^-1(Omega) (absent only when H is singular).
    """

    information: Optional[np.ndarray]
    crb_omega: Optional[np.ndarray]
    singular: Optional[Singular] = None
    signal_trace_bound: Optional[np.ndarray] = None

    @property
    def is_singular(self) -> bool:
        return self.singular is not None

    @property
    def per_param_variance(self) -> Optional[np.ndarray]:
        if self.crb_omega is None:
            return None
        return np.diag(self.crb_omega).copy()


def _singular_info(stage, matrix, scale=None):
    s = singular_values(matrix)
    return Singular(stage, numerical_rank(matrix, scale=scale),
                    float(s[-1]) if s.size else 0.0)


def _finish(information, scale, signal_trace_bound=None) -> CrbResult:
    """Invert CRB^-1(Omega) unless it is numerically singular relative to ``scale``.

    ``scale`` is the norm of Gamma: CRB^-1 is Gamma minus a correction, so its own
    largest singular value says nothing about round-off when the two cancel.
    """
    information = hermitian_part(information)
    n_p = information.shape[0]
    if numerical_rank(information, scale=scale) < n_p:
        return CrbResult(information, None, _singular_info("information", information, scale),
                         signal_trace_bound)
    crb = hermitian_part(linalg.inv(information))
    return CrbResult(information, crb, None, signal_trace_bound)


def _h_singular(bw: np.ndarray) -> Optional[Singular]:
    # rank(H) = rank(L^-1 B); the SVD of the thin factor is exact about the
    # structural zeros when N_y < K.
    k = bw.shape[1]
    rank = numerical_rank(bw)
    if rank < k:
        s = np.zeros(k)
        sv = singular_values(bw)
        s[:sv.size] = sv
        return Singular("H", rank, float(2.0 * s[-1] ** 2))
    return None


def crb_omega_closed_form(model: ModelInstance, signal_bound: bool = False) -> CrbResult:
    """CRB(Omega) from the projected closed form.

    CRB^-1 = 2 sum_t Re{D^H Phi^T R^-1 (I - B (B^H R^-1 B)^-1 B^H R^-1) Phi D}.
    After whitening by the Cholesky factor of R the bracket is the orthogonal
    projector onto the complement of range(L^-1 B), evaluated here through the
    trailing columns of a full QR factorization.
    """
    bw, gw = _whitened(model)
    singular = _h_singular(bw)
    if singular is not None:
        return CrbResult(None, None, singular)
    k = bw.shape[1]
    q, _ = linalg.qr(bw, mode="full")
    q_perp = q[:, k:]
    proj = np.einsum("yc,typ->tcp", q_perp.conj(), gw)
    information = _gamma(proj)
    scale = singular_values(_gamma(gw))
    traces = signal_crb_traces(model) if signal_bound else None
    return _finish(information, scale[0] if scale.size else 0.0, traces)


def crb_omega_via_schur(blocks: FimBlocks) -> CrbResult:
    """CRB^-1(Omega) = Gamma - sum_t Re{Delta_t^H H^-1 Delta_t}."""
    h = blocks.h
    if numerical_rank(h) < h.shape[0]:
        return CrbResult(None, None, _singular_info("H", h))
    factor = linalg.cho_factor(h, lower=True)
    correction = np.zeros_like(blocks.gamma)
    for delta in blocks.deltas:
        correction += (delta.conj().T @ linalg.cho_solve(factor, delta)).real
    # Solving with H amplifies round-off in the correction by up to cond(H).
    sh = singular_values(h)
    sg = singular_values(blocks.gamma)
    scale = (sg[0] if sg.size else 0.0) * sh[0] / sh[-1]
    return _finish(blocks.gamma - correction, scale)


def crb_omega_full_inverse(blocks: FimBlocks) -> CrbResult:
    """Omega x Omega corner of the explicit inverse of the assembled FIM."""
    fim, s = equilibrate(assemble_full_fim(blocks))
    n_p = blocks.n_params
    if numerical_rank(fim) < fim.shape[0]:
        return CrbResult(None, None, _singular_info("fim", fim))
    corner = linalg.inv(fim)[-n_p:, -n_p:] * np.outer(s[-n_p:], s[-n_p:])
    crb = hermitian_part(corner)
    return CrbResult(hermitian_part(linalg.inv(crb)), crb)


def projector(model: ModelInstance) -> np.ndarray:
    """I - B (B^H R^-1 B)^-1 B^H R^-1 in unwhitened form."""
    b = model.compressed
    rib = model.scheme.solve(b)
    gram = b.conj().T @ rib
    return np.eye(b.shape[0]) - b @ linalg.solve(gram, rib.conj().T, assume_a="her")


def signal_jacobian(model: ModelInstance, t: int) -> np.ndarray:
    """dx(t)/dtheta, shape (N_x, 2NK + P); ``t`` is a 0-based snapshot index."""
    if not 0 <= t < model.n_snapshots:
        raise IndexError(f"snapshot index {t} out of range [0, {model.n_snapshots})")
    layout = model.layout
    a = model.steering
    jac = np.zeros((a.shape[0], layout.size), dtype=complex)
    jac[:, layout.real(t)] = a
    jac[:, layout.imag(t)] = 1j * a
    jac[:, layout.omega] = model.derivatives.transpose(1, 0, 2) @ model.snapshots.amplitudes[:, t]
    return jac


def _fim_factor(model: ModelInstance):
    """Cholesky factor of the equilibrated FIM and the scaling vector."""
    fim, s = equilibrate(assemble_full_fim(fim_blocks(model)))
    rank = numerical_rank(fim)
    if rank < fim.shape[0]:
        sv = singular_values(fim)
        raise SingularInformation("full FIM is singular", rank, float(sv[-1]))
    return linalg.cho_factor(fim, lower=True), s


def _trace_bound(factor, jac) -> float:
    # I^-1 = S (S I S)^-1 S
    chol, s = factor
    js = jac * s
    x = linalg.cho_solve(chol, js.conj().T)
    value = np.trace(js @ x)
    if abs(value.imag) > 1e-10 * max(abs(value), np.finfo(float).tiny):
        raise ArithmeticError(f"trace bound has imaginary part {value.imag}")
    return float(value.real)


def signal_crb_trace(model: ModelInstance, t: int) -> float:
    """Tr{J I^-1 J^H}: lower bound on E||x_hat(t) - x(t)||^2 for unbiased estimators."""
    return _trace_bound(_fim_factor(model), signal_jacobian(model, t))


def signal_crb_traces(model: ModelInstance) -> Optional[np.ndarray]:
    """Trace bound for every snapshot, or ``None`` when the FIM is singular."""
    try:
        factor = _fim_factor(model)
    except SingularInformation:
        return None
    return np.array([_trace_bound(factor, signal_jacobian(model, t))
                     for t in range(model.n_snapshots)])
