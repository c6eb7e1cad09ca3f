"""Singularity diagnostics for the compressed-model FIM.

With N_y < K (or rank B < K) the amplitude block H has a null vector u, and
v = [Re u; Im u; 0...] is a null direction of the whole FIM. With N_y = K and B
invertible the Schur complement of the amplitude block T vanishes, so
rank I = rank T. Neither argument runs in reverse: more samples than sources
does not by itself guarantee a nonsingular FIM, which is why the third verdict
is only a *candidate*.
"""

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._linalg import EPS, equilibrate, numerical_rank
from .fim import (
    _whitened,
    assemble_full_fim,
    crb_omega_closed_form,
    fim_blocks,
)
from .model import ModelInstance

__all__ = [
    "VerdictKind",
    "SingularityVerdict",
    "RankAdditivityReport",
    "numerical_rank",
    "classify_fim",
    "null_witness",
    "rank_additivity_check",
]


class VerdictKind(str, enum.Enum):
    UNDERSAMPLED_RANK_DEFICIENT_B = "UndersampledRankDeficientB"
    SQUARE_FULL_RANK_B = "SquareFullRankB"
    NONSINGULAR_CANDIDATE = "NonsingularCandidate"

    def __str__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class SingularityVerdict:
    kind: VerdictKind
    rank_b: int
    rank_full_fim: int
    min_eigenvalue: float
    fim_norm: float
    witness: Optional[np.ndarray] = None

    @property
    def singular(self) -> bool:
        return self.kind is not VerdictKind.NONSINGULAR_CANDIDATE

    def witness_ratio(self, fim) -> float:
        """v^T I v / (||I|| ||v||^2) for the stored witness."""
        v = self.witness
        return float(v @ fim @ v) / (np.linalg.norm(fim, 2) * float(v @ v))


def _fim_rank(fim: np.ndarray) -> int:
    return numerical_rank(equilibrate(fim)[0])


def _amplitude_null_vector(bw: np.ndarray) -> np.ndarray:
    _, _, vh = np.linalg.svd(bw, full_matrices=True)
    # Right singular vectors beyond rank(B) span the null space of B, hence of H.
    return vh[-1].conj()


def null_witness(model: ModelInstance, kind: VerdictKind) -> Optional[np.ndarray]:
    """A real vector v with v^T I(theta) v = 0 in exact arithmetic."""
    layout = model.layout
    v = np.zeros(layout.size)
    if kind is VerdictKind.UNDERSAMPLED_RANK_DEFICIENT_B:
        bw, _ = _whitened(model)
        u = _amplitude_null_vector(bw)
        v[layout.real(0)] = u.real
        v[layout.imag(0)] = u.imag
        return v
    if kind is VerdictKind.SQUARE_FULL_RANK_B:
        if model.n_params == 0:
            return None
        info = crb_omega_closed_form(model).information
        _, vecs = np.linalg.eigh(info)
        e = vecs[:, 0]
        blocks = fim_blocks(model)
        for t in range(model.n_snapshots):
            u = -np.linalg.solve(blocks.h, blocks.deltas[t] @ e)
            v[layout.real(t)] = u.real
            v[layout.imag(t)] = u.imag
        v[layout.omega] = e
        return v
    return None


def classify_fim(model: ModelInstance) -> SingularityVerdict:
    k = model.n_sources
    n_y = model.n_measurements
    bw, _ = _whitened(model)
    rank_b = numerical_rank(bw)
    fim = assemble_full_fim(fim_blocks(model))
    eig = np.linalg.eigvalsh(fim)
    if n_y < k or rank_b < k:
        kind = VerdictKind.UNDERSAMPLED_RANK_DEFICIENT_B
    elif n_y == k:
        kind = VerdictKind.SQUARE_FULL_RANK_B
    else:
        kind = VerdictKind.NONSINGULAR_CANDIDATE
    return SingularityVerdict(
        kind=kind,
        rank_b=rank_b,
        rank_full_fim=_fim_rank(fim),
        min_eigenvalue=float(eig[0]),
        fim_norm=float(np.max(np.abs(eig))),
        witness=null_witness(model, kind),
    )


@dataclass(frozen=True)
class RankAdditivityReport:
    applicable: bool
    holds: bool
    rank_full: int
    rank_t: int
    rank_schur: int
    reason: str = ""

    def __bool__(self):
        return self.holds


def rank_additivity_check(model: ModelInstance) -> RankAdditivityReport:
    """Check rank I = rank T + rank(I / T), T the amplitude block.

    Ranks are taken on the Jacobi-equilibrated FIM S I S (the Schur complement
    scales to S_w (I/T) S_w) with one absolute threshold,
    ``dim(I) * eps * ||S I S||_2``: the Schur complement is a cancellation and
    carries no scale of its own.
    """
    blocks = fim_blocks(model)
    fim, s = equilibrate(assemble_full_fim(blocks))
    layout = model.layout
    k = model.n_sources
    tol = max(fim.shape) * EPS
    scale = np.linalg.norm(fim, 2)
    rank_full = numerical_rank(fim, tol=tol, scale=scale)
    if numerical_rank(blocks.h) < k:
        return RankAdditivityReport(False, False, rank_full, -1, -1, "H is singular")
    rank_t = sum(
        numerical_rank(fim[layout.snapshot(t), layout.snapshot(t)], tol=tol, scale=scale)
        for t in range(model.n_snapshots))
    if model.n_params == 0:
        rank_schur = 0
    else:
        schur = crb_omega_closed_form(model).information
        sw = s[layout.omega]
        rank_schur = numerical_rank(schur * np.outer(sw, sw), tol=tol, scale=scale)
    return RankAdditivityReport(True, rank_full == rank_t + rank_schur,
                                rank_full, rank_t, rank_schur)
