import json
import math

import pytest

from sphcrit import closed_forms as cf
from sphcrit.cli import EXIT_OK, EXIT_USAGE, main
from sphcrit.intervals import Interval


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_predict_json(capsys):
    code, out, _ = run(capsys, "predict", "--ell", "50", "--interval", "(-inf,1)")
    assert code == EXIT_OK
    data = json.loads(out)
    assert data["interval"] == "(-inf,1.0)"
    assert data["nu_c"] == pytest.approx(cf.nu_c(Interval(-math.inf, 1.0)))
    assert data["expected_count"] == pytest.approx(cf.expected_count(50, Interval(-math.inf, 1.0)))


def test_predict_text(capsys):
    code, out, _ = run(capsys, "predict", "--format", "text")
    assert code == EXIT_OK and out.splitlines()[0].startswith("ell")


@pytest.mark.parametrize("argv", [("predict", "--interval", "(1,0)"), ("predict", "--interval", "oops"), ("predict", "--ell", "1")])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_USAGE and "error" in err


def test_bad_config(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n_samples = 1\n")
    assert run(capsys, "simulate", str(cfg), "--out", str(tmp_path / "o"))[0] == EXIT_USAGE
    cfg.write_text("colour = red\n")
    assert run(capsys, "simulate", str(cfg), "--out", str(tmp_path / "o"))[0] == EXIT_USAGE


def test_simulate_outputs_and_rerun(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("ells = 5, 6\nn_samples = 30\nintervals = (-inf,1); (0,inf)\nlevels = 0.5\nseed = 4\n")
    outs = []
    for name in ("a", "b"):
        code, out, _ = run(capsys, "simulate", str(cfg), "--out", str(tmp_path / name))
        assert code == EXIT_OK and "flagged 0.00%" in out
        outs.append(tmp_path / name)
    for f in ("manifest.json", "records.jsonl", "summary.json", "summary.csv"):
        assert (outs[0] / f).is_file()
    for f in ("records.jsonl", "summary.json", "summary.csv"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert [r["ell"] for r in summary["sweep"]] == [5, 6]


def test_output_root_env(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("ells = 4\nn_samples = 2\n")
    monkeypatch.setenv("SPHCRIT_OUTPUT_ROOT", str(tmp_path / "root"))
    assert run(capsys, "simulate", str(cfg))[0] == EXIT_OK
    assert len(list((tmp_path / "root").glob("run-*/records.jsonl"))) == 1


def test_sweep_needs_two_degrees(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("ells = 4\nn_samples = 2\n")
    assert run(capsys, "sweep", str(cfg), "--out", str(tmp_path / "s"))[0] == EXIT_USAGE


def test_coefficients_json(capsys):
    code, out, _ = run(capsys, "coefficients", "--interval", "R", "--n", "200000", "--json")
    assert code == EXIT_OK
    rows = {r["coefficient"]: r for r in json.loads(out)["rows"]}
    assert set(rows) == {"k2", "k5", "h25"}
    assert all(abs(r["z"]) < 4.5 for r in rows.values())


def test_coefficients_epc(capsys):
    code, out, _ = run(capsys, "coefficients", "--epc", "--u", "1.0", "--n", "200000", "--json")
    rows = {r["coefficient"]: r for r in json.loads(out)["rows"]}
    assert code == EXIT_OK and abs(rows["k5_rederived"]["z"]) < 4.5
    assert run(capsys, "coefficients", "--epc")[0] == EXIT_USAGE
    assert run(capsys, "coefficients")[0] == EXIT_USAGE


def test_verify_json(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--suite", "closed-forms", "--json", str(tmp_path / "v.json"))
    data = json.loads((tmp_path / "v.json").read_text())
    assert [d["criterion"] for d in data] == list(range(1, 9))
    assert code == (EXIT_OK if all(d["passed"] for d in data) else 1)
    assert out.count("\n") == 9
