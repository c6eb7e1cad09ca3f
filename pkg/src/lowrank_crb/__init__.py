"""Cramer-Rao bounds for parameter estimation in compressed low-rank signal models."""

__version__ = "0.1.0"

from .errors import CrbError, DimensionMismatch, SingularCovariance, SingularInformation
from .model import (
    MeasurementScheme,
    ModelInstance,
    ObservationSet,
    ParameterLayout,
    ParametricMatrixFamily,
    SnapshotSet,
    assemble_theta,
    fixed_family,
    generate_observations,
    log_likelihood,
    noise_covariance,
    split_theta,
)
from .fim import (
    CrbResult,
    FimBlocks,
    assemble_full_fim,
    build_D,
    crb_omega_closed_form,
    crb_omega_full_inverse,
    crb_omega_via_schur,
    fim_blocks,
    score,
    signal_crb_trace,
    signal_jacobian,
)
from .singularity import (
    SingularityVerdict,
    VerdictKind,
    classify_fim,
    numerical_rank,
    rank_additivity_check,
)
from .doa import (
    LineSpectrumConfig,
    UlaConfig,
    build_doa_family,
    ula_steering,
    ula_steering_derivative,
)
