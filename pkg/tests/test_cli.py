from __future__ import annotations

import json
from pathlib import Path

import pytest
from typer.testing import CliRunner

from lqbae.cli import app

ROOT = Path(__file__).resolve().parents[1]

runner = CliRunner()


def run(*args: str):
    return runner.invoke(app, ["--format", "structured", *args])


def keys(output: str) -> dict:
    out = {}
    for line in output.splitlines():
        key, sep, value = line.partition(" = ")
        if sep:
            out[key] = value
    return out


def test_validate_clean_system(systems_dir):
    res = run("validate", systems_dir["michelson"])
    assert res.exit_code == 0, res.output
    kv = keys(res.stdout)
    assert kv["validation.count"] == "0"
    assert kv["input.name"] == "michelson"


def test_validate_reports_asymmetric_omega_plus(systems_dir):
    res = run("validate", systems_dir["bad_omega_plus"])
    assert res.exit_code == 1
    assert "E103_OMEGA_PLUS_NOT_SYMMETRIC" in keys(res.stdout).values()


def test_validate_text_mode_and_report_file(systems_dir, tmp_path):
    out = tmp_path / "report.json"
    res = runner.invoke(app, ["validate", systems_dir["bad_omega_plus"], "--report", str(out)])
    assert res.exit_code == 1
    doc = json.loads(out.read_text())
    assert doc["validation"]["issues"][0]["code"] == "E103_OMEGA_PLUS_NOT_SYMMETRIC"


def test_parse_errors_exit_with_two(systems_dir):
    assert run("validate", systems_dir["bad_entry"]).exit_code == 2
    assert run("analyze", systems_dir["bad_syntax"]).exit_code == 2


def test_analyze_bae(systems_dir):
    res = run("analyze", "--bae", systems_dir["michelson"])
    assert res.exit_code == 0, res.output
    kv = keys(res.stdout)
    assert kv["bae.predictions.0.selector"] == "q_out<-p_in"
    assert kv["bae.predictions.0.rule"] == "real-scattering-imaginary-coupling"
    assert kv["bae.certificates.0.verdict"] == "true"
    assert kv["bae.confirmed"] == "true"
    assert not any(k.startswith("qnd.") for k in kv)


def test_analyze_is_deterministic(systems_dir):
    a = run("analyze", systems_dir["qnd"])
    b = run("analyze", systems_dir["qnd"])
    assert a.exit_code == 0, a.output
    assert a.stdout == b.stdout
    kv = keys(a.stdout)
    assert kv["qnd.interaction.holds"] == "true"
    assert "kalman.n_co" in kv


def test_json_input_matches_yaml(systems_dir):
    a = keys(run("analyze", "--bae", systems_dir["michelson"]).stdout)
    b = keys(run("analyze", "--bae", systems_dir["michelson_json"]).stdout)
    assert a["bae.predictions.0.selector"] == b["bae.predictions.0.selector"]


def test_certify_exit_codes(systems_dir):
    ok = run("certify", systems_dir["michelson"], "--out", "q", "--in", "p")
    assert ok.exit_code == 0, ok.output
    assert keys(ok.stdout)["certificate.verdict"] == "true"
    bad = run("certify", systems_dir["michelson"], "--out", "p", "--in", "q")
    assert bad.exit_code == 1
    assert keys(bad.stdout)["certificate.verdict"] == "false"
    assert run("certify", systems_dir["michelson"], "--out", "x", "--in", "q").exit_code == 2


def test_transfer_at_a_pole(systems_dir):
    assert run("transfer", systems_dir["michelson"], "--s", "1j").exit_code == 1
    res = run("transfer", systems_dir["cavity"], "--s", "1.5", "--markov", "2")
    assert res.exit_code == 0, res.output
    assert "transfer.closed_form_q" in keys(res.stdout)


def test_compose_writes_a_valid_system(systems_dir, tmp_path):
    out = tmp_path / "reduced.yaml"
    res = run("compose", systems_dir["feedback_plant"], "--out", str(out))
    assert res.exit_code == 0, res.output
    kv = keys(res.stdout)
    assert kv["feedback.verdict"] == "true"
    assert kv["feedback.written"] == str(out)
    assert run("validate", str(out)).exit_code == 0


def test_compose_needs_a_plant(systems_dir, tmp_path):
    assert run("compose", systems_dir["michelson"], "--out", str(tmp_path / "x.yaml")).exit_code == 2


def test_optomech(systems_dir):
    assert keys(run("optomech", systems_dir["optomech"]).stdout)["optomech.is_qnd"] == "true"
    assert keys(run("optomech", systems_dir["optomech_not_qnd"]).stdout)["optomech.is_qnd"] == "false"


def test_analyze_optomech_file(systems_dir):
    res = run("analyze", "--qnd", systems_dir["optomech"])
    assert res.exit_code == 0, res.output
    kv = keys(res.stdout)
    assert kv["optomech.is_qnd"] == "true"
    assert kv["system.kind"] == "optomech"
    assert not any(k.startswith("bae.") for k in kv)
    other = keys(run("analyze", "--qnd", systems_dir["optomech_not_qnd"]).stdout)
    assert other["optomech.is_qnd"] == "false"
    full = run("analyze", systems_dir["optomech"])
    assert full.exit_code == 0, full.output
    assert "bae.certificates.0.verdict" in keys(full.stdout)


def test_kalman_form(systems_dir):
    res = run("kalman", systems_dir["kalman_co"])
    assert res.exit_code == 0, res.output
    kv = keys(res.stdout)
    assert kv["kalman.form.verdict"] == "true"
    assert kv["kalman.criteria.q_wrt_p"] == "true"


def test_simulate_injection(systems_dir, tmp_path):
    traj = tmp_path / "traj.txt"
    res = run("simulate", systems_dir["michelson"], "--inject", "p:q", "--trajectory", str(traj))
    assert res.exit_code == 0, res.output
    assert keys(res.stdout)["simulate.injection.bae"] == "true"
    assert traj.read_text().startswith("# t q_out1 q_out2 p_out1 p_out2")
    back = run("simulate", systems_dir["michelson"], "--inject", "q:p")
    assert keys(back.stdout)["simulate.injection.bae"] == "false"


def test_simulate_seed_is_reproducible(systems_dir):
    a = run("--seed", "4", "simulate", systems_dir["qnd"], "--martingale")
    b = run("--seed", "4", "simulate", systems_dir["qnd"], "--martingale")
    assert a.exit_code == 0, a.output
    assert a.stdout == b.stdout
    kv = keys(a.stdout)
    assert kv["simulate.seed"] == "4"
    assert "simulate.martingale.passed" in kv


def test_simulate_martingale_refuses_non_qnd(systems_dir):
    assert run("simulate", systems_dir["cavity"], "--martingale").exit_code == 1


def test_list_profiles_with_file():
    res = run("--profile-file", str(ROOT / "profiles.yaml"), "list-profiles")
    assert res.exit_code == 0, res.output
    kv = keys(res.stdout)
    assert kv["profiles.lab.fail_on"] == "WARN"
    assert "profiles.strict.certify_tol" in kv


@pytest.mark.parametrize("args", [
    ("--profile", "nope", "list-profiles"),
    ("--format", "xml", "list-profiles"),
    ("--tol", "-1", "list-profiles"),
])
def test_bad_global_options(args):
    assert runner.invoke(app, list(args)).exit_code == 2
