import json
import math
from pathlib import Path

import pytest

from artifact.cli import config_hash, main

FIXTURES = Path(__file__).parent / "fixtures"


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip().startswith("{") else None)


def test_frd_build_verify(tmp_path, capsys):
    stack = str(tmp_path / "s.bin")
    code, rec = run(["frd", "build", "--L", "4", "--N", "3", "--m2", "0.05", "--stack", stack], capsys)
    assert code == 0
    code, rec = run(["frd", "verify", "--stack", stack], capsys)
    assert code == 0 and all(c["passed"] for c in rec["checks"].values())


def test_mc_enumerate_golden(capsys):
    code, rec = run(["mc", "enumerate", "--torus", "2", "--beta", "6", "--m2", "0.5", "--nmax", "8"], capsys)
    gold = json.loads((FIXTURES / "mc_enumerate_2x2.json").read_text())
    assert code == 0
    assert rec["config_hash"] == gold["config_hash"]
    for key in ("var", "mgf", "cos"):
        for a, b in zip(rec["results"][key], gold["results"][key]):
            assert a["value"] == pytest.approx(b["value"], rel=1e-13)
    assert rec["results"]["tail"] < 1e-10


def test_green_fit(capsys):
    code, rec = run(["spectral", "green-fit", "--side", "2048"], capsys)
    assert code == 0 and abs(rec["results"]["slope"] * math.pi - 1) < 0.01


def test_usage_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"beta": 4,\n  "side": }')
    assert main(["mc", "run", "--config", str(bad)]) == 2
    assert "bad.json:2:" in capsys.readouterr().err
    bad.write_text('{"betta": 4}')
    assert main(["mc", "run", "--config", str(bad)]) == 2
    assert "betta" in capsys.readouterr().err
    assert main(["nonsense"]) == 2
    assert main(["mc", "run", "--update", "metropolis", "--window", "0"]) == 2


def test_check_failure_exit(capsys):
    # no sign change on the bracket: the shooting check cannot succeed
    code, rec = run(["flow", "shoot", "--z0", "0.01", "--bracket", "0.5 1"], capsys)
    assert code == 1


def test_seed_override_and_report(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "mc.json"
    cfg.write_text(json.dumps({"beta": 40, "side": 8, "sweeps": 200, "burn": 10, "y": [[1, 0]]}))
    monkeypatch.setenv("ARTIFACT_SEED", "99")
    out = tmp_path / "run.json"
    code, rec = run(["mc", "run", "--config", str(cfg), "--out", str(out)], capsys)
    assert code == 0 and rec["seeds"] == [99] and rec["config"]["seed"] == 99
    assert rec["config_hash"] == config_hash(rec["config"])
    other = json.loads(out.read_text())
    other["code_version"] = "0.0.0"
    o2 = tmp_path / "old.json"
    o2.write_text(json.dumps(other))
    assert main(["report", str(out), str(o2), "--out-dir", str(tmp_path / "r")]) == 2
    capsys.readouterr()
    assert main(["report", str(out), str(o2), "--out-dir", str(tmp_path / "r"), "--force"]) == 0
    capsys.readouterr()
    text = (tmp_path / "r" / "summary.csv").read_text()
    assert text.startswith("# artifact-csv/1") and rec["config_hash"] in text
    assert (tmp_path / "r" / "manifest.json").exists()


def test_flow_run_csv(tmp_path, capsys):
    csv = tmp_path / "t.csv"
    code, rec = run(["flow", "run", "--beta", "60", "--z0", "0.01 0.001", "--csv", str(csv)], capsys)
    assert code == 0 and rec["results"]["alpha_hat"] > 0
    assert csv.read_text().startswith(f"# artifact-csv/1 config_hash={rec['config_hash']}")
