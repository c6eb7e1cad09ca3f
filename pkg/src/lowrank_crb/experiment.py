"""CRB-versus-compression sweep for a ULA DOA scenario.

Measurement matrices follow a nested protocol: Phi = I when N_y = N_x;
otherwise one (N_x - 1) x N_x matrix G with i.i.d. N(0, 1/(N_x - 1)) entries
is drawn (row-major) from ``seed_phi`` and Phi(N_y) is the first N_y rows of G
scaled by sqrt((N_x - 1) / N_y). The amplitudes d(t) ~ CN(0, source_power I)
are drawn once from ``seed_sources`` and reused for every N_y.
"""

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .doa import UlaConfig, build_doa_family
from .fim import crb_omega_closed_form
from .model import MeasurementScheme, ModelInstance, SnapshotSet, draw_complex_normal
from .oracle import MC_TRIALS, TOLERANCES
from .singularity import VerdictKind, classify_fim

log = logging.getLogger(__name__)

SWEEP_MONOTONICITY_DB = 1e-9

DEFAULT_OUTPUTS = {"csv": "sweep.csv", "plot": "crb_vs_ny.svg", "manifest": "manifest.json"}

CONVENTIONS = {
    "crb_db": "10*log10(CRB diagonal entry), variance in rad^2",
    "angles": "config angles in degrees, converted to radians internally",
    "noise_power": "sigma^2 = source_power * 10**(-snr_db/10)",
    "rng": "numpy.random.default_rng(seed), PCG64",
    "phi_draw": "row-major (N_x-1) x N_x standard normals / sqrt(N_x-1); "
                "Phi(N_y) = first N_y rows * sqrt((N_x-1)/N_y); Phi(N_x) = I",
    "source_draw": "K x N amplitudes drawn snapshot by snapshot, entry by entry, "
                   "real then imaginary, each part with variance source_power/2",
    "param_index": "1-based (crb_db_param_1 is omega_1)",
}


@dataclass
class ExperimentConfig:
    n_elements: int
    spacing_ratio: float
    source_angles_deg: List[float]
    n_snapshots: int
    snr_db: float
    source_power: float
    seed_phi: int
    seed_sources: int
    ny_range: List[int]
    target_param_index: int
    outputs: dict = field(default_factory=lambda: dict(DEFAULT_OUTPUTS))

    REQUIRED = ("n_elements", "spacing_ratio", "source_angles_deg", "n_snapshots",
                "snr_db", "source_power", "seed_phi", "seed_sources", "ny_range",
                "target_param_index")

    def __post_init__(self):
        self.source_angles_deg = [float(a) for a in self.source_angles_deg]
        self.ny_range = [int(n) for n in self.ny_range]
        self.outputs = {**DEFAULT_OUTPUTS, **(self.outputs or {})}
        if self.n_elements < 1 or self.n_snapshots < 1:
            raise ValueError("n_elements and n_snapshots must be positive")
        if not self.source_angles_deg:
            raise ValueError("source_angles_deg must not be empty")
        if not self.ny_range:
            raise ValueError("ny_range must not be empty")
        bad = [n for n in self.ny_range if not 1 <= n <= self.n_elements]
        if bad:
            raise ValueError(f"ny_range entries outside [1, {self.n_elements}]: {bad}")
        if not 1 <= self.target_param_index <= self.n_sources:
            raise ValueError(f"target_param_index must be in [1, {self.n_sources}]")
        if self.source_power <= 0:
            raise ValueError("source_power must be positive")
        if np.any(np.diff(self.source_angles_deg) <= 0):
            warnings.warn("source angles are not strictly increasing", stacklevel=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        missing = [k for k in cls.REQUIRED if k not in data]
        if missing:
            raise ValueError(f"config is missing required fields: {missing}")
        unknown = set(data) - set(cls.REQUIRED) - {"outputs"}
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def n_sources(self) -> int:
        return len(self.source_angles_deg)

    @property
    def noise_power(self) -> float:
        return self.source_power * 10.0 ** (-self.snr_db / 10.0)

    @property
    def omega(self) -> np.ndarray:
        return np.deg2rad(self.source_angles_deg)


def fig1_config(**overrides) -> ExperimentConfig:
    """50-element half-wavelength ULA, 11 sources at 20:3:50 degrees, 10 snapshots,
    10 dB SNR; N_y swept from 50 down to 1."""
    data = dict(
        n_elements=50,
        spacing_ratio=0.5,
        source_angles_deg=[20.0 + 3.0 * k for k in range(11)],
        n_snapshots=10,
        snr_db=10.0,
        source_power=1.0,
        seed_phi=2014,
        seed_sources=7,
        ny_range=list(range(50, 0, -1)),
        target_param_index=6,
    )
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


def desk_config(**overrides) -> ExperimentConfig:
    """Small instance used by ``verify``: N_x=8, N_y=5, K=P=2, N=2."""
    data = dict(
        n_elements=8,
        spacing_ratio=0.5,
        source_angles_deg=[-12.0, 21.0],
        n_snapshots=2,
        snr_db=5.0,
        source_power=1.0,
        seed_phi=11,
        seed_sources=3,
        ny_range=[5],
        target_param_index=1,
    )
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


def initial_phi(seed_phi: int, n_x: int) -> np.ndarray:
    """The (n_x - 1) x n_x Gaussian matrix with entries N(0, 1/(n_x - 1))."""
    if n_x < 2:
        raise ValueError("n_x must be at least 2 to draw a compression matrix")
    rng = np.random.default_rng(seed_phi)
    return rng.standard_normal((n_x - 1, n_x)) / math.sqrt(n_x - 1)


def nested_phi(initial: Optional[np.ndarray], n_y: int, n_x: int, rescale: bool = True):
    if not 1 <= n_y <= n_x:
        raise ValueError(f"n_y={n_y} outside [1, {n_x}]")
    if n_y == n_x:
        return np.eye(n_x)
    rows = initial[:n_y]
    return rows * math.sqrt((n_x - 1) / n_y) if rescale else rows.copy()


def fig1_phi(seed_phi: int, n_y: int, n_x: int, rescale: bool = True) -> np.ndarray:
    if not 1 <= n_y <= n_x:
        raise ValueError(f"n_y={n_y} outside [1, {n_x}]")
    if n_y == n_x:
        return np.eye(n_x)
    return nested_phi(initial_phi(seed_phi, n_x), n_y, n_x, rescale)


def draw_sources(config: ExperimentConfig) -> SnapshotSet:
    rng = np.random.default_rng(config.seed_sources)
    d = draw_complex_normal(rng, (config.n_snapshots, config.n_sources), config.source_power)
    return SnapshotSet(d.T)


def build_model(config: ExperimentConfig, n_y: int, phi=None,
                sources: Optional[SnapshotSet] = None) -> ModelInstance:
    if phi is None:
        phi = fig1_phi(config.seed_phi, n_y, config.n_elements)
    family = build_doa_family(UlaConfig(config.n_elements, config.spacing_ratio),
                              config.n_sources)
    sources = draw_sources(config) if sources is None else sources
    return ModelInstance(family, config.omega, sources,
                         MeasurementScheme(phi, config.noise_power))


@dataclass(frozen=True, eq=False)
class SweepRow:
    n_y: int
    verdict: VerdictKind
    crb: Optional[np.ndarray] = None  # per-parameter variance, rad^2

    @property
    def crb_db(self) -> Optional[np.ndarray]:
        return None if self.crb is None else 10.0 * np.log10(self.crb)


def run_sweep(config: ExperimentConfig, rescale: bool = True) -> List[SweepRow]:
    """CRB(Omega) for every N_y in the config, ordered by N_y descending."""
    n_x = config.n_elements
    initial = initial_phi(config.seed_phi, n_x) if n_x > 1 else None
    sources = draw_sources(config)
    rows = []
    for n_y in sorted(set(config.ny_range), reverse=True):
        phi = nested_phi(initial, n_y, n_x, rescale)
        model = build_model(config, n_y, phi, sources)
        verdict = classify_fim(model)
        crb = None
        if verdict.kind is VerdictKind.NONSINGULAR_CANDIDATE:
            result = crb_omega_closed_form(model)
            if result.is_singular:
                log.info("N_y=%d: CRB^-1(Omega) singular (%s)", n_y, result.singular)
            else:
                crb = result.per_param_variance
        rows.append(SweepRow(n_y, verdict.kind, crb))
        log.debug("N_y=%d verdict=%s", n_y, verdict.kind)
    return rows


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(rows: List[SweepRow], n_params: int, path) -> None:
    header = ["n_y", "verdict"] + [f"crb_db_param_{p + 1}" for p in range(n_params)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            db = row.crb_db
            values = [""] * n_params if db is None else [_fmt(v) for v in db]
            writer.writerow([row.n_y, str(row.verdict)] + values)


def write_plot(rows: List[SweepRow], config: ExperimentConfig, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    p = config.target_param_index - 1
    pts = sorted((r.n_y, r.crb_db[p]) for r in rows if r.crb is not None)
    with matplotlib.rc_context({"svg.hashsalt": "lowrank-crb", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        if pts:
            ny, db = zip(*pts)
            ax.plot(ny, db, "o-", ms=3, lw=1.2)
            ax.axvline(ny[0], color="0.6", ls=":", lw=1)
            ax.annotate(f"$N_y = {ny[0]}$", (ny[0], db[0]), textcoords="offset points",
                        xytext=(8, 0), fontsize=8)
        angle = config.source_angles_deg[p]
        ax.set_title(f"CRB for $\\omega_{{{p + 1}}}$ = {angle:g} deg")
        ax.set_xlabel("Number of compressed samples ($N_y$)")
        ax.set_ylabel("CRB (dB)")
        ax.grid(True, lw=0.4, alpha=0.6)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def manifest(rows: List[SweepRow], config: ExperimentConfig) -> dict:
    finite = [r.n_y for r in rows if r.crb is not None]
    return {
        "library": "lowrank_crb",
        "version": __version__,
        "config": config.to_dict(),
        "seeds": {"seed_phi": config.seed_phi, "seed_sources": config.seed_sources},
        "derived": {"noise_power": config.noise_power, "n_sources": config.n_sources,
                    "omega_rad": [float(x) for x in config.omega]},
        "conventions": CONVENTIONS,
        "tolerances": {**TOLERANCES, "mc_trials": MC_TRIALS,
                       "sweep_monotonicity_db": SWEEP_MONOTONICITY_DB,
                       "rank": "max(shape) * eps * largest singular value"},
        "summary": {
            "rows": len(rows),
            "finite_rows": len(finite),
            "min_finite_n_y": min(finite) if finite else None,
            "verdicts": {str(r.n_y): str(r.verdict) for r in rows},
        },
    }


def emit_outputs(rows: List[SweepRow], config: ExperimentConfig, out_dir) -> dict:
    """Write CSV, SVG plot and JSON manifest into ``out_dir``; return their paths."""
    if not rows:
        raise ValueError("no sweep rows to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in config.outputs.items()}
    write_csv(rows, config.n_sources, paths["csv"])
    write_plot(rows, config, paths["plot"])
    with open(paths["manifest"], "w") as fh:
        json.dump(manifest(rows, config), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def monotone_violations(rows: List[SweepRow], tol_db: float = SWEEP_MONOTONICITY_DB):
    """(n_y_hi, n_y_lo, param) triples where the CRB dB drops by more than ``tol_db``
    as N_y decreases over consecutive finite rows."""
    finite = sorted((r for r in rows if r.crb is not None), key=lambda r: -r.n_y)
    bad = []
    for hi, lo in zip(finite, finite[1:]):
        drop = hi.crb_db - lo.crb_db
        for p in np.flatnonzero(drop > tol_db):
            bad.append((hi.n_y, lo.n_y, int(p) + 1))
    return bad
