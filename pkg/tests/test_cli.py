import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from omxsim import cli

CIRCUITS = Path(__file__).resolve().parent.parent / "circuits"
SCHEMA = json.loads(
    (Path(cli.__file__).parent / "schemas" / "report.schema.json").read_text())


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------------------
# protocol subcommands

def test_teleport_json_validates_and_is_ideal(capsys):
    code, out, _ = run_cli(capsys, "teleport", "--n-bar", "0")
    assert code == 0
    payload = json.loads(out)
    jsonschema.validate(payload, SCHEMA)
    phi_plus = [o for o in payload["outcomes"] if o["outcome"] == "phi_plus"][0]
    assert phi_plus["fidelity_raw"] == 1.0


def test_swap_json_validates(capsys):
    code, out, _ = run_cli(capsys, "swap", "--n-bar", "0.2")
    assert code == 0
    payload = json.loads(out)
    jsonschema.validate(payload, SCHEMA)
    assert payload["aggregate_fidelity"] == pytest.approx((1296 / 1849) ** 2, abs=1e-9)


def test_readout_round_trip_via_cli(capsys):
    code, out, _ = run_cli(capsys, "readout", "--n-bar", "0",
                           "--alpha", "0.6,0", "--beta", "0,0.8")
    assert code == 0
    payload = json.loads(out)
    for herald in ("phi_plus", "phi_minus"):
        assert payload["retrieved"][herald]["fidelity"] == pytest.approx(1.0, abs=1e-9)


def test_qubit_flags_require_both(capsys):
    code, _, err = run_cli(capsys, "teleport", "--alpha", "0.6,0")
    assert code == 1
    assert "together" in err


def test_invalid_qubit_is_simulation_error(capsys):
    code, _, err = run_cli(capsys, "teleport", "--alpha", "1,0", "--beta", "1,0")
    assert code == 2
    assert "simulation error" in err


# ---------------------------------------------------------------------------
# sweep

def test_sweep_csv_schema_and_values(capsys):
    code, out, _ = run_cli(capsys, "sweep", "--protocol", "teleport",
                           "--from", "0", "--to", "0.3", "--steps", "61")
    assert code == 0
    lines = out.strip().splitlines()
    comments = [l for l in lines if l.startswith("#")]
    assert any("protocol = teleport" in c for c in comments)
    body = [l for l in lines if not l.startswith("#")]
    assert body[0] == "n_bar,simulated,closed_form,abs_diff"
    assert len(body) == 62
    for row in body[1:]:
        n_bar, simulated, closed, diff = (float(x) for x in row.split(","))
        assert abs(simulated - closed) < 1e-9
        assert diff < 1e-9


def test_sweep_json_format(capsys):
    code, out, _ = run_cli(capsys, "sweep", "--protocol", "swap",
                           "--from", "0", "--to", "0.1", "--steps", "3",
                           "--format", "json")
    assert code == 0
    payload = json.loads(out)
    assert payload["protocol"] == "swap"
    assert len(payload["rows"]) == 3
    assert payload["rows"][0]["simulated"] == pytest.approx(1.0, abs=1e-9)


def test_sweep_usage_errors(capsys):
    code, _, _ = run_cli(capsys, "sweep", "--protocol", "teleport",
                         "--from", "0.3", "--to", "0", "--steps", "5")
    assert code == 1
    code, _, _ = run_cli(capsys, "sweep", "--protocol", "teleport",
                         "--from", "0", "--to", "0.3", "--steps", "0")
    assert code == 1


# ---------------------------------------------------------------------------
# threshold

def test_threshold_prints_crossing(capsys):
    code, out, _ = run_cli(capsys, "threshold", "--target", "0.6667")
    assert code == 0
    value = float(out.strip().splitlines()[-1].split("=")[1])
    assert value == pytest.approx(0.233, abs=1e-3)


def test_threshold_unreachable_target(capsys):
    code, _, err = run_cli(capsys, "threshold", "--target", "0.05")
    assert code == 2
    assert "unreachable" in err


# ---------------------------------------------------------------------------
# circuit files

def test_run_and_validate_shipped_circuits(capsys):
    for name in ("teleport.omx", "swap.omx"):
        code, out, _ = run_cli(capsys, "run", str(CIRCUITS / name))
        assert code == 0
        jsonschema.validate(json.loads(out), SCHEMA)
        code, out, _ = run_cli(capsys, "validate", str(CIRCUITS / name))
        assert code == 0
        assert out.startswith("OK:")


def test_parse_error_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.omx"
    bad.write_text("apply bs50(pA.H)\n")
    code, _, err = run_cli(capsys, "validate", str(bad))
    assert code == 3
    assert "second mode argument" in err


def test_semantic_error_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.omx"
    bad.write_text("mode photon A\napply bs50(A.V, Z.V)\nmeasure bell(A, A)\n")
    code, _, err = run_cli(capsys, "run", str(bad))
    assert code == 3
    assert "undeclared" in err


def test_usage_error_exits_1(capsys):
    code, _, _ = run_cli(capsys, "no-such-command")
    assert code == 1
    code, _, _ = run_cli(capsys, "teleport", "--bogus-flag")
    assert code == 1


# ---------------------------------------------------------------------------
# determinism and output files

def test_identical_invocations_are_byte_identical(capsys):
    args = ("teleport", "--n-bar", "0.17", "--theta", "0.9", "--phi", "1.3")
    _, first, _ = run_cli(capsys, *args)
    _, second, _ = run_cli(capsys, *args)
    assert first == second
    args = ("sweep", "--protocol", "teleport", "--from", "0", "--to", "0.2",
            "--steps", "11")
    _, first, _ = run_cli(capsys, *args)
    _, second, _ = run_cli(capsys, *args)
    assert first == second


def test_sampling_is_seeded(capsys):
    args = ("teleport", "--n-bar", "0.1", "--sample", "25", "--seed", "11")
    _, first, _ = run_cli(capsys, *args)
    _, second, _ = run_cli(capsys, *args)
    assert first == second
    heralds = json.loads(first)["sampled_heralds"]
    assert len(heralds) == 25
    _, other, _ = run_cli(capsys, "teleport", "--n-bar", "0.1",
                          "--sample", "25", "--seed", "12")
    assert json.loads(other)["sampled_heralds"] != heralds


def test_module_entry_point_runs_as_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "omxsim.cli", "teleport", "--n-bar", "0"],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    payload = json.loads(proc.stdout)
    jsonschema.validate(payload, SCHEMA)


def test_omx_threads_env_does_not_change_output(monkeypatch, capsys):
    args = ("sweep", "--protocol", "teleport", "--from", "0", "--to", "0.3",
            "--steps", "13")
    _, sequential, _ = run_cli(capsys, *args)
    monkeypatch.setenv("OMX_THREADS", "4")
    _, threaded, _ = run_cli(capsys, *args)
    assert sequential == threaded


def test_output_flag_writes_file(tmp_path, capsys):
    target = tmp_path / "report.json"
    code, out, _ = run_cli(capsys, "teleport", "--n-bar", "0", "--output", str(target))
    assert code == 0
    assert out == ""
    payload = json.loads(target.read_text())
    jsonschema.validate(payload, SCHEMA)
