import json

import numpy as np
import pytest

from spinsense import cli
from spinsense.config import ConfigError, ExperimentConfig, load_config


SCALING_CFG = """
[estimation]
N_list = 128,512
trials = 12
mode = abstract
true_axis = random
psi0 = 0,0,1

[run]
seed = 7
"""

GATE_CFG = """
[chain]
n = 4
J = 1.0

[schedule]
T = 1.0
dt = 0.01

[field]
direction = 1,0,0
J_f = 1.0

[perturbation]
operator_label = Sz
gamma_list = 0.0,0.1

[run]
seed = 7
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_load_config_defaults_and_sections(tmp_path):
    cfg = load_config(write(tmp_path, "a.cfg", SCALING_CFG))
    assert cfg.N_list == (128, 512)
    assert cfg.trials == 12
    assert cfg.true_axis is None
    assert cfg.seed == 7


def test_load_config_rejects_bad_values(tmp_path):
    bad = SCALING_CFG.replace("trials = 12", "trials = 0")
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "b.cfg", bad))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.cfg"))


def test_config_direction_renormalized(tmp_path, capsys):
    text = GATE_CFG.replace("direction = 1,0,0", "direction = 2,0,0")
    cfg = load_config(write(tmp_path, "c.cfg", text))
    assert abs(cfg.field_direction.x - 1.0) < 1e-12


def test_spectrum_command_deterministic(tmp_path, capsys):
    cfg_path = write(
        tmp_path,
        "spec.cfg",
        "[chain]\nn = 4\nJ = 1.0\n\n[run]\nseed = 3\n",
    )
    assert cli.main(["spectrum", "--config", cfg_path]) == 0
    first = capsys.readouterr().out
    assert cli.main(["spectrum", "--config", cfg_path]) == 0
    second = capsys.readouterr().out
    assert first == second
    assert "splitting=" in first and "gap=" in first


def test_spectrum_command_ambiguous_exit_code(tmp_path, capsys):
    cfg_path = write(tmp_path, "n2.cfg", "[chain]\nn = 2\n")
    assert cli.main(["spectrum", "--config", cfg_path]) == 2


def test_malformed_config_exit_code_no_output(tmp_path):
    cfg_path = write(tmp_path, "bad.cfg", "[estimation]\ntrials = -3\n")
    out_path = tmp_path / "out.json"
    code = cli.main(["estimate", "--config", cfg_path, "--output", str(out_path)])
    assert code == 1
    assert not out_path.exists()


def test_gate_fidelity_csv_shape(tmp_path):
    cfg_path = write(tmp_path, "gate.cfg", GATE_CFG)
    out_path = tmp_path / "rows.csv"
    code = cli.main(["gate-fidelity", "--config", cfg_path, "--output", str(out_path)])
    assert code == 0
    lines = out_path.read_text().strip().split("\n")
    assert lines[0] == "gamma,operator,n,T,dt,fidelity,leakage,seed,walltime_s"
    assert len(lines) == 3  # header + 2 gamma cells
    cells = lines[1].split(",")
    assert cells[0] == "0" and cells[1] == "Sz" and cells[2] == "4"


def test_gate_fidelity_deterministic_up_to_walltime(tmp_path):
    cfg_path = write(tmp_path, "gate.cfg", GATE_CFG)
    out1 = tmp_path / "r1.csv"
    out2 = tmp_path / "r2.csv"
    assert cli.main(["gate-fidelity", "--config", cfg_path, "--output", str(out1)]) == 0
    assert cli.main(["gate-fidelity", "--config", cfg_path, "--output", str(out2)]) == 0

    def strip_walltime(text):
        return ["," .join(line.split(",")[:-1]) for line in text.strip().split("\n")]

    assert strip_walltime(out1.read_text()) == strip_walltime(out2.read_text())


def test_gate_fidelity_parallel_matches_serial(tmp_path):
    cfg_path = write(tmp_path, "gate.cfg", GATE_CFG)
    out1 = tmp_path / "serial.csv"
    out2 = tmp_path / "par.csv"
    assert cli.main(["gate-fidelity", "--config", cfg_path, "--output", str(out1)]) == 0
    assert (
        cli.main(["gate-fidelity", "--config", cfg_path, "--output", str(out2), "--threads", "2"])
        == 0
    )

    def strip_walltime(text):
        return ["," .join(line.split(",")[:-1]) for line in text.strip().split("\n")]

    assert strip_walltime(out1.read_text()) == strip_walltime(out2.read_text())


def test_estimate_json_keys_and_determinism(tmp_path):
    cfg_path = write(tmp_path, "est.cfg", SCALING_CFG)
    out1 = tmp_path / "e1.json"
    out2 = tmp_path / "e2.json"
    assert cli.main(["estimate", "--config", cfg_path, "--output", str(out1)]) == 0
    assert cli.main(["estimate", "--config", cfg_path, "--output", str(out2)]) == 0
    rec1 = json.loads(out1.read_text())
    rec2 = json.loads(out2.read_text())
    assert [r["N"] for r in rec1] == [128, 512]
    expected_keys = {
        "mode",
        "N",
        "trials",
        "axis_estimate",
        "mean_angular_error",
        "var_angular_error",
        "E_f_estimate",
        "residual",
        "seed",
        "degenerate_trials",
        "walltime_s",
    }
    assert set(rec1[0].keys()) == expected_keys
    for a, b in zip(rec1, rec2):
        assert a["mean_angular_error"] == b["mean_angular_error"]
        assert a["axis_estimate"] == b["axis_estimate"]


def test_estimate_with_backgrounds(tmp_path):
    text = (
        SCALING_CFG
        + "\n[field]\ndirection = 1,0,0\nJ_f = 0.1\n"
        + "\n[background_1]\nstrength = 1.0\ndirection = 0,0,1\n"
        + "\n[background_2]\nstrength = 1.0\ndirection = 0,1,0\n"
    )
    cfg_path = write(tmp_path, "bg.cfg", text)
    out = tmp_path / "bg.json"
    assert cli.main(["estimate", "--config", cfg_path, "--output", str(out)]) == 0
    recs = json.loads(out.read_text())
    assert recs[0]["E_f_estimate"] is not None
    assert recs[0]["residual"] is not None


def test_validate_command_passes(tmp_path, capsys):
    assert cli.main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "checks passed" in out


def test_validate_detects_impossible_tolerances():
    from spinsense.validate import run_validation

    results = run_validation(tolerance_scale=0.0)
    assert any(not r.passed for r in results)


def test_seed_flag_overrides_config(tmp_path, capsys):
    cfg_path = write(tmp_path, "est.cfg", SCALING_CFG)
    assert cli.main(["estimate", "--config", cfg_path, "--seed", "9"]) == 0
    rec = json.loads(capsys.readouterr().out)
    from spinsense.metrology import mix_seed

    assert rec[0]["seed"] == mix_seed(9, 0)
