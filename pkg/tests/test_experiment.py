import json
from pathlib import Path

import numpy as np
import pytest

from lowrank_crb.cli import main
from lowrank_crb.experiment import (
    ExperimentConfig,
    build_model,
    desk_config,
    emit_outputs,
    fig1_config,
    fig1_phi,
    initial_phi,
    monotone_violations,
    run_sweep,
)
from lowrank_crb.fim import crb_omega_closed_form
from lowrank_crb.singularity import VerdictKind

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def small_config(**kw):
    data = dict(n_elements=12, source_angles_deg=[-20.0, 5.0, 30.0], n_snapshots=3,
                ny_range=list(range(12, 0, -1)), seed_phi=1, seed_sources=2,
                target_param_index=2)
    data.update(kw)
    return fig1_config(**data)


def test_phi_full_size_is_identity():
    np.testing.assert_array_equal(fig1_phi(2014, 50, 50), np.eye(50))


def test_phi_unscaled_rows_are_the_draw():
    expected = np.random.default_rng(2014).standard_normal((49, 50)) / np.sqrt(49)
    np.testing.assert_array_equal(fig1_phi(2014, 49, 50, rescale=False), expected)


@pytest.mark.parametrize("n_y", [1, 11, 30, 48])
def test_phi_prefix_property(n_y):
    big, small = fig1_phi(5, 49, 50), fig1_phi(5, n_y, 50)
    np.testing.assert_allclose(big[:n_y] * np.sqrt(49 / n_y), small, rtol=1e-15, atol=1e-15)


def test_phi_entry_variance():
    phi = initial_phi(0, 400)
    assert np.var(phi) * 399 == pytest.approx(1.0, rel=0.02)


def test_phi_rejects_bad_sizes():
    with pytest.raises(ValueError):
        fig1_phi(0, 0, 10)
    with pytest.raises(ValueError):
        fig1_phi(0, 11, 10)


def test_row_scaling_does_not_change_crb():
    config = small_config()
    for n_y in (5, 8):
        a = crb_omega_closed_form(build_model(config, n_y, fig1_phi(1, n_y, 12, True)))
        b = crb_omega_closed_form(build_model(config, n_y, fig1_phi(1, n_y, 12, False)))
        np.testing.assert_allclose(a.crb_omega, b.crb_omega, rtol=1e-10)


def test_noise_power_from_snr():
    assert fig1_config().noise_power == pytest.approx(0.1)
    assert fig1_config(source_power=2.0, snr_db=0.0).noise_power == 2.0


def test_sweep_rows_small():
    rows = run_sweep(small_config())
    assert [r.n_y for r in rows] == list(range(12, 0, -1))
    kinds = {r.n_y: r.verdict for r in rows}
    assert kinds[3] is VerdictKind.SQUARE_FULL_RANK_B
    assert kinds[2] is kinds[1] is VerdictKind.UNDERSAMPLED_RANK_DEFICIENT_B
    assert all(r.crb is not None for r in rows if r.n_y > 3)
    assert all(r.crb is None for r in rows if r.n_y <= 3)
    assert monotone_violations(rows) == []


def test_monotone_violations_detects_drop():
    from lowrank_crb.experiment import SweepRow

    nc = VerdictKind.NONSINGULAR_CANDIDATE
    rows = [SweepRow(5, nc, np.array([1.0, 1.0])), SweepRow(4, nc, np.array([2.0, 0.5]))]
    assert monotone_violations(rows) == [(5, 4, 2)]


@pytest.fixture(scope="module")
def fig1_outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig1")
    config = fig1_config()
    rows = run_sweep(config)
    return rows, emit_outputs(rows, config, out)


def test_fig1_csv_layout(fig1_outputs):
    rows, paths = fig1_outputs
    lines = paths["csv"].read_text().splitlines()
    assert lines[0] == "n_y,verdict," + ",".join(f"crb_db_param_{p}" for p in range(1, 12))
    assert len(lines) == 51
    assert lines[1].startswith("50,NonsingularCandidate,")
    assert lines[39].startswith("12,NonsingularCandidate,")
    assert lines[40] == "11,SquareFullRankB" + "," * 11
    assert lines[41] == "10,UndersampledRankDeficientB" + "," * 11
    finite = [ln for ln in lines[1:] if not ln.endswith(",")]
    assert len(finite) == 39


def test_fig1_values_round_trip(fig1_outputs):
    rows, paths = fig1_outputs
    lines = paths["csv"].read_text().splitlines()[1:]
    for row, line in zip(rows, lines):
        if row.crb is not None:
            parsed = np.array([float(x) for x in line.split(",")[2:]])
            np.testing.assert_array_equal(parsed, row.crb_db)


def test_fig1_manifest(fig1_outputs):
    _, paths = fig1_outputs
    data = json.loads(paths["manifest"].read_text())
    assert data["summary"]["min_finite_n_y"] == 12
    assert data["seeds"] == {"seed_phi": 2014, "seed_sources": 7}
    assert data["config"]["target_param_index"] == 6
    assert paths["plot"].read_text().lstrip().startswith("<?xml")


def test_config_files_match_builtins():
    assert ExperimentConfig.from_json(CONFIGS / "fig1.json") == fig1_config()
    assert ExperimentConfig.from_json(CONFIGS / "desk.json") == desk_config()


def test_config_missing_field():
    data = fig1_config().to_dict()
    del data["snr_db"]
    with pytest.raises(ValueError, match="snr_db"):
        ExperimentConfig.from_dict(data)


def test_config_unknown_field():
    data = fig1_config().to_dict()
    data["snr"] = 3
    with pytest.raises(ValueError, match="unknown"):
        ExperimentConfig.from_dict(data)


@pytest.mark.parametrize("override", [
    {"ny_range": [51]}, {"ny_range": [0]}, {"target_param_index": 12},
    {"source_power": 0.0}, {"ny_range": []},
])
def test_config_rejects_bad_values(override):
    with pytest.raises(ValueError):
        fig1_config(**override)


# -- CLI -------------------------------------------------------------------

def test_cli_sweep(tmp_path, capsys):
    assert main(["sweep", "--config", str(CONFIGS / "fig1.json"), "--out", str(tmp_path)]) == 0
    assert "finite CRB for N_y in [12, 50]" in capsys.readouterr().out
    assert {p.name for p in tmp_path.iterdir()} == {"sweep.csv", "crb_vs_ny.svg",
                                                    "manifest.json"}


def test_cli_crb(capsys):
    assert main(["crb", "--config", str(CONFIGS / "fig1.json"), "--ny", "20"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["singular"] is None
    assert len(out["crb_db"]) == 11


def test_cli_crb_singular_with_signal_bound(capsys):
    assert main(["crb", "--config", str(CONFIGS / "desk.json"), "--ny", "2",
                 "--signal-bound"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["singular"]["stage"] == "information"
    assert out["crb_db"] is None


def test_cli_classify(capsys):
    assert main(["classify", "--config", str(CONFIGS / "fig1.json"), "--ny", "11"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["verdict"] == "SquareFullRankB"
    assert out["rank_additivity"]["holds"]


def test_cli_seed_override(capsys):
    main(["crb", "--config", str(CONFIGS / "fig1.json"), "--ny", "20"])
    a = json.loads(capsys.readouterr().out)["crb_db"]
    main(["crb", "--config", str(CONFIGS / "fig1.json"), "--ny", "20", "--seed-phi", "3"])
    b = json.loads(capsys.readouterr().out)["crb_db"]
    assert a != b


def test_cli_verify_desk(capsys):
    assert main(["verify", "--trials", "200000"]) == 0
    assert capsys.readouterr().out.strip().endswith("PASS")


def test_cli_requires_config():
    with pytest.raises(SystemExit):
        main(["crb"])


def test_sweep_down_to_twelve_has_39_lines(tmp_path):
    config = fig1_config(ny_range=list(range(50, 11, -1)))
    paths = emit_outputs(run_sweep(config), config, tmp_path)
    lines = paths["csv"].read_text().splitlines()
    assert len(lines) == 1 + 39
    assert all(",NonsingularCandidate," in ln for ln in lines[1:])
