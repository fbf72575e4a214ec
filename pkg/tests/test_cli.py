import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from dreamhop import experiments as ex
from dreamhop.cli import main
from dreamhop.coupling import load_coupling
from dreamhop.data_gen import ParameterDomainError


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_theory_density_columns(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["theory", "density", "--setting", "unsupervised", "--alpha", "0.1", "--r", "0.6",
                 "--t", "1", "--grid", "50", "--out", str(out)]) == 0
    rows = _rows(out)
    assert list(rows[0]) == ["lambda", "density", "peak_location", "peak_mass"]
    assert len(rows) == 50 and float(rows[0]["peak_mass"]) == pytest.approx(0.9)


def test_retrieval_theory_stdout(capsys):
    assert main(["retrieval", "theory", "--scenario", "storing-attractiveness", "--alpha", "0.1",
                 "--sweep", "p=0:1:0.25"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "x,m1_theory,ga_bound" and len(lines) == 6


def test_domain_error_exit_code(capsys):
    assert main(["theory", "density", "--alpha", "1.5"]) == 2
    assert "error" in capsys.readouterr().err


def test_coupling_build_and_dataset(tmp_path):
    out = tmp_path / "J"
    ds = tmp_path / "data"
    assert main(["coupling", "build", "--setting", "supervised", "--N", "60", "--alpha", "0.1", "--r", "0.7",
                 "--M", "5", "--t", "2", "--out", str(out), "--save-dataset", str(ds)]) == 0
    J = load_coupling(out)
    assert J.N == 60 and np.allclose(J.J, J.J.T)
    again = tmp_path / "J2"
    assert main(["coupling", "build", "--dataset", str(ds), "--t", "2", "--out", str(again)]) == 0
    assert np.allclose(load_coupling(again).J, J.J, atol=1e-12)


def test_simulate_round_trip(tmp_path):
    out = tmp_path / "se.csv"
    assert main(["simulate", "se", "--setting", "supervised", "--N", "100", "--alpha", "0.1", "--r", "0.5",
                 "--Ms", "2,8", "--t", "0,1", "--trials", "2", "--out", str(out)]) == 0
    meta = json.loads(out.with_suffix(".json").read_text())
    assert meta["content_hash"] == ex.content_hash(out.read_bytes())
    again = tmp_path / "again.csv"
    assert main(["simulate", "se", "--from-metadata", str(out.with_suffix(".json")), "--out", str(again)]) == 0
    assert again.read_bytes() == out.read_bytes()


def test_simulate_retrieval_and_spectrum(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["simulate", "retrieval", "--N", "200", "--alpha", "0.1", "--p", "0.5,1", "--t", "0",
                 "--trials", "2", "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 2 and float(rows[1]["m0"]) == 1.0
    spec = tmp_path / "s.csv"
    assert main(["simulate", "spectrum", "--N", "200", "--alpha", "0.2", "--t", "1", "--trials", "1",
                 "--bins", "10", "--out", str(spec)]) == 0
    meta = json.loads(spec.with_suffix(".json").read_text())
    assert meta["reports"][0]["zero_count"] == 160


def test_reproduce_bit_identical(tmp_path):
    args = ["reproduce", "fig3", "--panel", "attractiveness", "--N", "200", "--trials", "2", "--alpha", "0.1",
            "--t", "0,10", "--p", "0.5,1"]
    assert main(args + ["--out-dir", str(tmp_path / "a"), "--svg"]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    a, b = tmp_path / "a" / "fig3_attractiveness.csv", tmp_path / "b" / "fig3_attractiveness.csv"
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a" / "fig3_attractiveness.svg").read_text().startswith("<svg")
    rows = _rows(a)
    assert list(rows[0]) == ex.PANEL_COLUMNS and len(rows) == 4
    meta_path = a.with_suffix(".json")
    assert main(["reproduce", "fig3", "--from-metadata", str(meta_path), "--out-dir", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "fig3_attractiveness.csv").read_bytes() == a.read_bytes()


def test_reproduce_refusal_exit_code(tmp_path, capsys):
    assert main(["reproduce", "fig3", "--out-dir", str(tmp_path)]) == 3
    err = capsys.readouterr().err
    assert "refused" in err and "--N" in err
    assert not (tmp_path / "fig3_attractiveness.csv").exists()


def test_reproduce_theory_only_fig2(tmp_path):
    assert main(["reproduce", "fig2", "--panel", "supervised", "--no-sim", "--alpha", "0.1", "--r", "0.5,1",
                 "--t", "0", "--Ms", "10", "--out-dir", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "fig2_supervised_t0.csv")
    assert float(rows[1]["theory"]) < 1e-20 and rows[0]["sim_mean"] == ""


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(ex.OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["reproduce", "fig4", "--panel", "supervised", "--no-sim", "--alpha", "0.1", "--r", "0.9",
                 "--t", "0"]) == 0
    assert (tmp_path / "env" / "fig4_supervised.csv").exists()


def test_config_layering(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"N": 300, "trials": 4}))
    cfg = ex.merge_config("fig3", ex.load_config_file(cfg_file), {"trials": 2, "N": None})
    assert cfg.N == 300 and cfg.trials == 2
    assert cfg.get("ps") == ex.FIGURE_DEFAULTS["fig3"]["ps"]
    with pytest.raises(ParameterDomainError):
        ex.merge_config("fig3", {"bogus": 1})
    with pytest.raises(ParameterDomainError):
        ex.merge_config("fig3", flags={"ps": [1.5]})


def test_ordered_writer(tmp_path):
    w = ex.OrderedWriter(tmp_path / "o.csv", ["a"])
    w.put(1, [{"a": 2}])
    w.put(0, [{"a": 1}])
    w.close()
    assert (tmp_path / "o.csv").read_text() == "a\n1\n2\n"
    w = ex.OrderedWriter(tmp_path / "p.csv", ["a"])
    w.put(1, [{"a": 2}])
    with pytest.raises(RuntimeError):
        w.close()


def test_content_hash_is_git_blob():
    assert ex.content_hash(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_verify_fast_and_negative_control(tmp_path):
    assert main(["verify", "fast", "--out", str(tmp_path / "v.json")]) == 0
    rep = json.loads((tmp_path / "v.json").read_text())
    assert rep["passed"]
    assert main(["verify", "fast", "--quad-nodes", "4", "--out", str(tmp_path / "bad.json")]) == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dreamhop", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "reproduce" in res.stdout
