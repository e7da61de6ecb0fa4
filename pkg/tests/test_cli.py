import csv
import io
import json
import subprocess
import sys

import pytest

from chordarc import load_cloud
from chordarc.cli import EXIT_ASSERT, EXIT_OK, EXIT_PRECONDITION, EXIT_USAGE, main, read_config


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_unknown_subcommand_and_flag(capsys):
    assert run(capsys, "frobnicate")[0] == EXIT_USAGE
    assert run(capsys, "beta", "--spec", "line", "--nope")[0] == EXIT_USAGE
    assert run(capsys)[0] == EXIT_USAGE


def test_bad_spec_is_precondition(capsys):
    code, _, err = run(capsys, "generate", "--spec", "torus")
    assert code == EXIT_PRECONDITION and err


def test_missing_cloud_file(capsys, tmp_path):
    assert run(capsys, "grid", "--cloud", str(tmp_path / "nope.txt"))[0] == EXIT_PRECONDITION


def test_generate_round_trip(capsys, tmp_path):
    path = tmp_path / "disk.txt"
    code, _, _ = run(capsys, "generate", "--spec", "disk", "--h", "0.01", "--out", str(path))
    assert code == EXIT_OK
    S = load_cloud(path)
    assert S.h == 0.01 and S.total_weight == pytest.approx(2 * 3.141592653589793, rel=1e-3)
    code, out, _ = run(capsys, "generate", "--spec", "disk", "--h", "0.01")
    assert out == path.read_text()


def test_beta_line_is_all_zero(capsys):
    code, out, _ = run(capsys, "beta", "--spec", "line", "--eps", "0.1", "--h", "0.005")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows and all(float(r["bbeta"]) == 0 for r in rows)
    assert all(r["flagged"] == "0" for r in rows)


def test_beta_json_report(capsys):
    code, out, _ = run(capsys, "beta", "--spec", "disk", "--eps", "0.1", "--h", "0.01",
                       "--json")
    rep = json.loads(out)
    assert code == EXIT_OK and rep["A"] == 2.0 and rep["norm"] > 0


def test_grid_summary_and_export(capsys, tmp_path):
    code, out, _ = run(capsys, "grid", "--spec", "disk", "--h", "0.01", "--k-max", "3",
                       "--out", str(tmp_path / "g.json"))
    assert code == EXIT_OK
    assert "properties=ok" in out and "cubes=" in out and "method" not in out
    assert (tmp_path / "g.json").exists()
    code, out, _ = run(capsys, "grid", "--spec", "disk", "--h", "0.01", "--k-max", "3")
    assert json.loads(out)["partition"] is True


def test_corkscrew_both(capsys):
    code, out, _ = run(capsys, "corkscrew", "--spec", "line", "--x", "0,0", "--r", "1")
    rep = json.loads(out)
    assert code == EXIT_OK
    assert [c["kind"] for c in rep["certs"]] == ["Interior", "Exterior"]
    assert all(abs(c["constant"] - 0.5) < 0.025 for c in rep["certs"])


def test_corkscrew_flatness(capsys):
    code, out, _ = run(capsys, "corkscrew", "--spec", "line", "--h", "0.005", "--x", "0,0",
                       "--r", "0.4", "--kind", "flatness", "--eps", "0.02", "--c", "0.5",
                       "--C", "2")
    rep = json.loads(out)
    assert code == EXIT_OK and rep["certs"][0]["ok"] is True


def test_corkscrew_flatness_gate(capsys):
    code, _, _ = run(capsys, "corkscrew", "--spec", "line", "--h", "0.005", "--x", "0,0",
                     "--r", "0.4", "--kind", "flatness", "--eps", "0.2", "--c", "0.5",
                     "--C", "2")
    assert code == EXIT_PRECONDITION


def test_curve_with_sidecar(capsys, tmp_path):
    out_path = tmp_path / "c.txt"
    code, out, _ = run(capsys, "curve", "--spec", "line", "--X", "0,1", "--Y", "2,1",
                       "--out", str(out_path))
    assert code == EXIT_OK and out.startswith("C=")
    side = json.loads((tmp_path / "c.txt.json").read_text())
    assert side["case_trace"] == ["case2"]
    assert len(load_cloud(out_path)) >= 2


def test_pack(capsys):
    code, out, _ = run(capsys, "pack", "--spec", "line", "--h", "0.005", "--k-max", "3",
                       "--c0", "0.005,0.1")
    rep = json.loads(out)
    assert code == EXIT_OK
    assert rep["c0_cap"] == pytest.approx(rep["a0"] / 16)
    sups = [g["sup_ratio"] for g in rep["grid"]]
    assert sups[0] <= sups[1]
    assert run(capsys, "pack", "--spec", "line", "--h", "0.005", "--c0", "0.2")[0] == \
        EXIT_PRECONDITION


def test_energy_split(capsys):
    code, out, _ = run(capsys, "energy", "--spec", "disk", "--h", "0.005", "--x", "1,0",
                       "--r", "0.5")
    rep = json.loads(out)
    assert code == EXIT_OK and rep["inside"] <= 1e-3 * rep["energy"]


def test_energy_needs_window(capsys):
    assert run(capsys, "energy", "--spec", "disk", "--h", "0.01")[0] == EXIT_PRECONDITION


def test_read_config(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nh = 0.01\nn-pairs = 5\n\neps_grid = 0.1, 0.2\n")
    assert read_config(p) == {"h": "0.01", "n_pairs": "5", "eps_grid": "0.1, 0.2"}


def test_config_precedence_and_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("h = 0.02\nseed = 4\n")
    out = tmp_path / "rep.json"
    code, _, _ = run(capsys, "classify", "--spec", "line", "--config", str(cfg),
                     "--h", "0.005", "--out", str(out))
    rep = json.loads(out.read_text())
    assert code == EXIT_OK
    assert rep["provenance"]["h"] == 0.005  # flag beats file
    assert rep["provenance"]["seed"] == 4  # file beats default
    cfg.write_text("h = 0.02\ncolour = blue\n")
    assert run(capsys, "classify", "--spec", "line", "--config", str(cfg))[0] == EXIT_USAGE


def test_classify_and_report(capsys, tmp_path):
    out = tmp_path / "disk.json"
    code, digest, _ = run(capsys, "classify", "--spec", "disk", "--h", "0.005",
                          "--out", str(out), "--assert", "chordarc")
    assert code == EXIT_OK
    assert "ChordArc" in digest and "✓" in digest
    code, again, _ = run(capsys, "report", str(out), "--assert", "nta")
    assert code == EXIT_OK and again == digest
    code, verdicts, _ = run(capsys, "report", str(out), "--json")
    assert json.loads(verdicts)["ChordArc"]["status"] == "pass"


def test_report_rejects_invalid_json(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": "0"}))
    assert run(capsys, "report", str(bad))[0] == EXIT_PRECONDITION


def test_assert_failure_exits_three(capsys):
    code, _, err = run(capsys, "classify", "--spec", "slit", "--h", "0.005",
                       "--assert", "uniform")
    assert code == EXIT_ASSERT and "Uniform" in err


@pytest.mark.slow
def test_cantor_ntachk(capsys):
    code, _, _ = run(capsys, "classify", "--spec", "cantor:4", "--h", "0.002",
                     "--assert", "ntachk")
    assert code == EXIT_ASSERT


def test_console_script():
    res = subprocess.run([sys.executable, "-c", "from chordarc.cli import run; run()", "bogus"],
                         capture_output=True, text=True)
    assert res.returncode == EXIT_USAGE
    assert "usage" in res.stderr.lower()
