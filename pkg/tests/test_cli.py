import json

import pytest

from fracheat.cli import main, parse_datum


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_kernel_check_cauchy(capsys):
    code, out, err = run(capsys, "kernel", "--theta", "1", "--dim", "1", "--check")
    assert code == 0
    assert "mass=1.000000" in err and "Cauchy-oracle max error" in err
    man = json.loads(out)
    assert man["verdict"] == "PASS"
    assert man["result"]["oracle_max_error"] < 1e-8
    assert set(man) >= {"command_line", "config", "versions", "wall_clock_s", "outputs"}


def test_classify_subcritical(capsys):
    code, out, _ = run(capsys, "classify", "--f", "upow:3", "--dim", "1", "--theta", "2",
                       "--r", "1")
    assert code == 0
    assert json.loads(out)["result"]["regime"] == "Subcritical"


def test_out_of_regime_supersolution_fails(capsys):
    code, out, err = run(capsys, "verify", "supersolution", "--f", "exp", "--variant",
                         "critical-exp", "--sigma", "1", "--r", "0.5", "--datum", "logsing:2",
                         "--T", "0.01")
    assert code == 1
    assert "INVALID" in err
    assert json.loads(out)["result"]["verdict"] == "INVALID"


def test_wrong_family_is_a_config_error(capsys):
    code, _, err = run(capsys, "verify", "supersolution", "--f", "upow:3", "--variant",
                       "critical-exp")
    assert code == 2 and "usage" in err


@pytest.mark.parametrize("argv", [[], ["bogus"], ["classify", "--f", "upow:3"],
                                  ["classify", "--f", "nope", "--r", "1"],
                                  ["evolve", "--f", "upow:3", "--datum", "spiral:2"]])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and "usage" in err


def test_out_directory(tmp_path, capsys):
    code, out, _ = run(capsys, "kernel", "--theta", "2", "--out", str(tmp_path))
    assert code == 0 and out == ""
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["outputs"] == [str(tmp_path / "kernel_profile.csv")]
    assert (tmp_path / "kernel_profile.csv").exists()


def test_evolve_writes_snapshots(tmp_path, capsys):
    code, _, err = run(capsys, "--out", str(tmp_path), "evolve", "--f", "upow:3", "--theta",
                       "1.5", "--datum", "gauss:1", "--T", "0.01", "--resolution", "256",
                       "--nt", "8", "--ns", "32")
    assert code == 0 and "Converged" in err
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["result"]["status"] == "Converged"
    assert len(man["outputs"]) == 4


def test_verify_jensen_and_lemmas(capsys):
    assert run(capsys, "verify", "jensen", "--fields", "3", "--theta", "1.5")[0] == 0
    assert run(capsys, "verify", "lemmas", "--f", "exp", "--lemma", "L4_3",
               "--param", "beta=2", "--param", "gamma=1")[0] == 0


def test_scan(capsys):
    code, out, _ = run(capsys, "scan", "--f", "upow:3", "--theta", "1.5", "--alpha", "1.8",
                       "--r", "0.4")
    res = json.loads(out)["result"]
    assert code == 0 and res["violates"]
    assert res["integrability"]["finite"]


def test_sweep_command(tmp_path, capsys, monkeypatch):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"axes": {"f": ["upow:3"], "theta": [1.5], "r": [0.9]}}))
    monkeypatch.setenv("FRACHEAT_WORKERS", "1")
    code, _, _ = run(capsys, "sweep", "--plan", str(plan), "--out", str(tmp_path / "out"))
    assert code == 0
    assert (tmp_path / "out" / "verdicts.csv").exists()
    assert (tmp_path / "out" / "manifest.json").exists()


def test_parse_datum():
    f, singular = parse_datum("power:0.5")
    assert singular and f(4.0) == 0.5
    f, singular = parse_datum("const:2")
    assert not singular and f(10.0) == 2.0


def test_verify_smoothing_defaults_resolve_the_rate(capsys):
    code, out, _ = run(capsys, "verify", "smoothing", "--theta", "1.5", "--a", "0.5")
    res = json.loads(out)["result"]
    assert code == 0 and res["resolved"]
    assert res["slope"] == pytest.approx(-1 / 3, abs=0.05)
