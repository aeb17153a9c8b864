import json
import logging

import numpy as np
import pytest

from arcc import presets as P
from arcc.cli import (
    EXIT_CHECK,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_RUNTIME,
    SCHEMA,
    ConfigurationFileError,
    main,
    parse_config,
)
from arcc.lti import TransferFunction
from arcc.plant import TRAJECTORY_COLUMNS
from arcc.sysid import Signal, generate_sweep, simulate_zoh, write_signal_csv


def run(*argv):
    return main([str(a) for a in argv])


# configuration


def test_empty_config_gives_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    cfg = parse_config("bench", path)
    for key, default in SCHEMA["bench"].items():
        assert cfg[key] == default
    assert cfg["preset"] == "rail-and-contour"


def test_unknown_key_named():
    with pytest.raises(ConfigurationFileError, match="frobnicate"):
        parse_config("bench", overrides={"frobnicate": 1})


def test_unit_mismatch_names_expected_key():
    with pytest.raises(ConfigurationFileError, match="force_setpoint_n"):
        parse_config("simulate", overrides={"force_setpoint_kn": 0.005})


def test_flag_beats_file_with_warning(tmp_path, caplog):
    path = tmp_path / "run.yaml"
    path.write_text("seed: 3\nrepetitions: 5\n")
    with caplog.at_level(logging.WARNING, logger="arcc"):
        cfg = parse_config("bench", path, flags={"seed": 9})
    assert cfg["seed"] == 9
    assert cfg["repetitions"] == 5
    assert "overrides" in caplog.text


def test_sectioned_config_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("seed: 4\nbench:\n  repetitions: 2\ntune:\n  safety_factor: 0.8\n")
    cfg = parse_config("bench", path)
    assert cfg["repetitions"] == 2
    assert cfg["seed"] == 4


def test_unknown_preset_rejected():
    with pytest.raises(ConfigurationFileError, match="unknown preset"):
        parse_config("bench", flags={"preset": "nope"})


def test_bad_value_type_rejected():
    with pytest.raises(ConfigurationFileError):
        parse_config("bench", overrides={"repetitions": "many"})


def test_two_stage_preset_constants():
    spring = P.PLANT_PRESETS["arcc-two-stage"].build().spring
    assert spring.force(0.6439) == pytest.approx(5.0)
    assert spring.x_t == pytest.approx(1.41)
    assert spring.c2 == pytest.approx(40 / 1.499)


# entry point


def test_help_lists_presets(capsys):
    with pytest.raises(SystemExit) as exc:
        run("bench", "--help")
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for table in P.all_presets().values():
        for name, preset in table.items():
            assert name in text
            assert preset.provenance in text


def test_unknown_key_exit_code(tmp_path, capsys):
    assert run("bode", "--out", tmp_path, "--set", "colour=blue") == EXIT_CONFIG
    assert "colour" in capsys.readouterr().err


def test_missing_config_file_exit_code(tmp_path):
    assert run("bode", "--config", tmp_path / "absent.yaml", "--out", tmp_path) == EXIT_CONFIG


def test_bode_outputs_and_check(tmp_path, capsys):
    assert run("bode", "--out", tmp_path, "--check") == EXIT_OK
    names = {p.name for p in tmp_path.iterdir()}
    assert {"bode_robot.csv", "bode_arcc-no-payload.csv", "bode_arcc-1.5kg.csv", "bandwidth.md", "manifest.json"} <= names
    assert "PASS ratio_no_payload_31.06" in capsys.readouterr().out
    header = (tmp_path / "bode_robot.csv").read_text().splitlines()[0]
    assert header.startswith("freq_hz")


def test_manifest_contents(tmp_path):
    run("bode", "--out", tmp_path, "--seed", 11)
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["seed"] == 11
    assert len(m["config_hash"]) == 64
    assert m["version"]
    assert m["config"]["f_lo_hz"] == SCHEMA["bode"]["f_lo_hz"]


def test_rerun_reproduces_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("bench", "--preset", "contact", "--set", "repetitions=1", "--out", out, "--seed", 5) == EXIT_OK
    for name in ("results.csv", "report.md"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_simulate_writes_trajectory(tmp_path):
    assert run("simulate", "--out", tmp_path, "--set", "approach_offset_mm=2", "--check") == EXIT_OK
    header = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
    assert header == ",".join(TRAJECTORY_COLUMNS)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["configuration"] == "ARCC-two-stage"


def test_identify_self_test(tmp_path):
    assert run("identify", "--self-test", "--out", tmp_path, "--check") == EXIT_OK
    rep = json.loads((tmp_path / "ident_robot.json").read_text())
    assert rep["model_order"] == 1
    assert rep["max_rel_denominator_error"] < 0.05


def test_identify_from_csv(tmp_path):
    u = generate_sweep(10.0, 120.0, 2.0, 1000.0)
    y = simulate_zoh(TransferFunction.first_order(1.4, 0.02), u)
    write_signal_csv(u, tmp_path / "u.csv")
    write_signal_csv(y, tmp_path / "y.csv")
    code = run(
        "identify", "--out", tmp_path / "o",
        "--set", f"input_csv={tmp_path / 'u.csv'}", "--set", f"output_csv={tmp_path / 'y.csv'}",
    )
    assert code == EXIT_OK
    rep = json.loads((tmp_path / "o" / "ident_report.json").read_text())
    den = np.array(rep["denominator"])
    assert den[0] / den[-1] == pytest.approx(0.02, rel=1e-3)


def test_runtime_error_exit_code(tmp_path):
    zeros = Signal(np.zeros(500), 1000.0)
    write_signal_csv(zeros, tmp_path / "u.csv")
    write_signal_csv(zeros, tmp_path / "y.csv")
    code = run(
        "identify", "--out", tmp_path / "o",
        "--set", f"input_csv={tmp_path / 'u.csv'}", "--set", f"output_csv={tmp_path / 'y.csv'}",
    )
    assert code == EXIT_RUNTIME


def test_tune_margins(tmp_path):
    assert run("tune", "--out", tmp_path, "--check") == EXIT_OK
    data = json.loads((tmp_path / "tune.json").read_text())
    robot = data["stability_margins"]["robot-only"]["critical_gain_m_per_n_s"]
    arcc = data["stability_margins"]["ARCC-one-stage"]["critical_gain_m_per_n_s"]
    assert arcc / robot >= 5


def test_failed_check_exit_code(tmp_path):
    # an absurdly slow ARCC gain cannot beat the robot, so the ordering check fails
    code = run(
        "bench", "--preset", "contact", "--out", tmp_path, "--check",
        "--set", "repetitions=1", "--set", "arcc_gain_m_per_n_s=1e-5",
    )
    assert code == EXIT_CHECK
