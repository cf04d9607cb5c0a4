import json
import subprocess
import sys

import pytest

from ranklab import cli
from ranklab.errors import NumericOverflowError
from ranklab.theorems import TheoremReport


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "d.csv"
    assert run("gen-data", "--out", path, "--count", 1500, "--seed", 1) == 0
    return path


def test_gen_data_is_byte_identical(tmp_path, small_data):
    other = tmp_path / "again.csv"
    assert run("gen-data", "--out", other, "--count", 1500, "--seed", 1) == 0
    assert other.read_bytes() == small_data.read_bytes()
    assert small_data.read_text().startswith("rsl-data-1,n_fields=")


def test_unknown_flag_and_missing_command_exit_one(capsys):
    assert run("gen-data", "--bogus") == 1
    assert run() == 1
    assert run("paramcount", "--variant", "nope") == 1


def test_paramcount_rankelastor(capsys):
    assert run("paramcount", "--variant", "rankelastor", "--T", 15, "--D", 26, "--L", 2, "--r", 3) == 0
    out = capsys.readouterr().out
    table = dict(line.split() for line in out.splitlines()[1:])
    assert out.splitlines()[0].split() == ["component", "count"]
    assert table["mixing_per_block"] == "152100" and table["ffn_per_token"] == "6760"


def test_paramcount_rankmixer_zero_mixing(capsys):
    assert run("paramcount", "--variant", "rankmixer", "--T", 15, "--D", 30) == 0
    table = dict(line.split() for line in capsys.readouterr().out.splitlines()[1:])
    assert table["mixing_per_block"] == "0"


def test_config_file_schema_and_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"schema": "rsl-config-1", "model": {"variant": "rankelastor", "T": 15, "D": 26}}))
    assert run("paramcount", "--config", cfg) == 0
    assert "152100" in capsys.readouterr().out
    assert run("paramcount", "--config", cfg, "--D", 12) == 0
    assert "152100" not in capsys.readouterr().out
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": {}}))
    assert run("paramcount", "--config", bad) == 1
    bad.write_text("{not json")
    assert run("paramcount", "--config", bad) == 1


def test_train_trace_plot_pipeline(tmp_path, small_data):
    ck, hist = tmp_path / "m.json", tmp_path / "h.csv"
    args = ["train", "--data", small_data, "--out", ck, "--history", hist, "--variant", "rankmixer",
            "--epochs", 2, "--seed", 3]
    assert run(*args) == 0
    lines = hist.read_text().splitlines()
    assert lines[0] == "epoch,train_logloss,valid_logloss,valid_auc" and len(lines) >= 2
    first = ck.read_bytes()
    assert run(*args) == 0 and ck.read_bytes() == first

    tr, agg, svg = tmp_path / "t.csv", tmp_path / "a.csv", tmp_path / "p.svg"
    targs = ["trace", "--checkpoint", ck, "--data", small_data, "--samples", 100,
             "--out-trace", tr, "--out-aggregate", agg, "--plot", svg]
    assert run(*targs) == 0
    assert tr.read_text().splitlines()[0] == "stage,sample_id,erank"
    assert agg.read_text().splitlines()[0] == "stage,mean,std,bin_lo,bin_hi,count"
    body = svg.read_bytes()
    assert run(*targs) == 0 and svg.read_bytes() == body

    svg2, svg3 = tmp_path / "p2.svg", tmp_path / "p3.svg"
    assert run("plot", agg, "--out", svg2) == 0 and run("plot", agg, "--out", svg3) == 0
    assert svg2.read_bytes() == svg3.read_bytes() and b"<polyline" in svg2.read_bytes()


def test_trace_two_fresh_variants(tmp_path):
    tr, agg, svg = tmp_path / "t.csv", tmp_path / "a.csv", tmp_path / "p.svg"
    assert run("trace", "--variant", "rankmixer", "--variant", "rankelastor", "--samples", 50,
               "--out-trace", tr, "--out-aggregate", agg, "--plot", svg) == 0
    assert agg.read_text().startswith("variant,stage,mean")
    assert svg.read_text().count("<polyline") == 2


def test_trace_argument_errors(tmp_path):
    out = ["--out-trace", tmp_path / "t", "--out-aggregate", tmp_path / "a"]
    assert run("trace", *out) == 1
    assert run("trace", "--checkpoint", tmp_path / "missing.json", *out) == 1


def test_plot_malformed_csv(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("stage,mean\nx,1\n")
    assert run("plot", bad, "--out", tmp_path / "o.svg") == 1
    assert run("plot", tmp_path / "absent.csv", "--out", tmp_path / "o.svg") == 1
    assert not (tmp_path / "o.svg").exists()


def test_verify_all_seed_seven(tmp_path, capsys):
    assert run("verify", "--theorem", "all", "--seed", 7, "--trials", 200, "--out-dir", tmp_path) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["ffn-collapse.json", "glu-gain.json", "glu-lifting-k2.json", "glu-lifting-k3.json",
                     "mixing-bounds.json", "reachability.json"]
    assert all(json.loads((tmp_path / n).read_text())["schema"] == "rsl-report-1" for n in names)


def test_verify_exit_two_only_on_exact_violation(monkeypatch):
    def fake(exact, checks):
        return lambda name, seed, trials: [TheoremReport(name, seed, {}, 1, 1, 0, exact, checks=checks)]
    monkeypatch.setattr(cli, "run_theorem", fake(1, {}))
    assert run("verify", "--theorem", "reachability") == 2
    monkeypatch.setattr(cli, "run_theorem", fake(0, {"median_gain_positive": False}))
    assert run("verify", "--theorem", "glu-gain") == 0


def test_numeric_abort_exit_three(monkeypatch):
    def boom(args):
        raise NumericOverflowError("stage mix_1 produced non-finite values")
    monkeypatch.setattr(cli, "cmd_paramcount", boom)
    assert run("paramcount") == 3


def test_thread_cap_env(monkeypatch, capsys):
    monkeypatch.setenv("RSL_THREADS", "1")
    assert run("verify", "--theorem", "reachability", "--trials", 20) == 0
    single = capsys.readouterr().out
    monkeypatch.setenv("RSL_THREADS", "4")
    assert run("verify", "--theorem", "reachability", "--trials", 20) == 0
    assert capsys.readouterr().out == single


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ranklab", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "paramcount" in res.stdout
