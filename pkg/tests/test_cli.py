import csv
import json
import shutil
import subprocess
import sys

import pytest

from elc.cli import main
from elc.filters import ElcModel
from elc.metrics import TABLE_COLUMNS
from elc.trace import load_trace

SMALL = ["--n-future", "50", "--n-skip", "50", "--n-lower", "4", "--n-upper", "4"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def traces(tmp_path_factory):
    d = tmp_path_factory.mktemp("traces")
    train, test = d / "train.fdrt", d / "test.fdrt"
    assert run("gen", "--ge", "1e-3,1e-3,0.95,0.6", "--n", 40_000, "--seed", 1, "--out", train) == 0
    assert run("gen", "--ge", "1e-3,1e-3,0.95,0.6", "--n", 20_000, "--seed", 2, "--out", test) == 0
    return train, test


def test_gen_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.fdrt", tmp_path / "b.fdrt"
    for p in (a, b):
        assert run("gen", "--ge", "0.01,0.05,0.95,0.4", "--n", 5000, "--seed", 42, "--out", p) == 0
    assert a.read_bytes() == b.read_bytes()
    man = json.loads((tmp_path / "a.fdrt.manifest.json").read_text())
    assert man["command"] == "gen" and man["seed"] == 42 and man["n"] == 5000


def test_gen_csv_and_profile(tmp_path):
    prof = tmp_path / "p.txt"
    prof.write_text("# two plateaus\n300 0.9\n200 0.3\n")
    out = tmp_path / "p.csv"
    assert run("gen", "--profile", prof, "--seed", 3, "--label", "link-a", "--out", out) == 0
    tr = load_trace(out)
    assert len(tr) == 500 and tr.channel_label == "link-a"


def test_gen_million(tmp_path):
    out = tmp_path / "m.fdrt"
    assert run("gen", "--ge", "0.01,0.05,0.95,0.4", "--n", 1_000_000, "--seed", 5, "--out", out) == 0
    assert len(load_trace(out)) == 1_000_000


@pytest.mark.parametrize("argv", [
    ["gen", "--ge", "0.01,0.05,0.95,0.4", "--n", "100"],          # no seed
    ["gen", "--ge", "0.01,0.05", "--n", "100", "--seed", "1"],     # malformed
    ["gen", "--ge", "0.01,0.05,0.3,0.9", "--n", "100", "--seed", "1"],  # good < bad
    ["gen", "--seed", "1", "--n", "10"],                           # no source
    ["fit"],                                                       # missing required
    ["bogus"],
])
def test_usage_errors_exit_2(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path / "x")]) == 2


def test_fit_defaults_and_report(traces, tmp_path):
    train, _ = traces
    out = tmp_path / "model.json"
    assert run("fit", "--train", train, "--out", out, *SMALL) == 0
    model = ElcModel.load(out)
    rep = json.loads((tmp_path / "model.fit.json").read_text())
    assert rep["n_alpha"] == model.n_alpha == len(rep["alpha_f"])
    assert rep["config"]["n_future"] == 50 and rep["config"]["lambda_max"] == 0.75
    assert len(rep["alpha_s"]) <= 9
    man = json.loads((tmp_path / "model.json.manifest.json").read_text())
    assert man["command"] == "fit" and man["config"]["n_lower"] == 4
    assert str(out) in man["outputs"]


def test_fit_lambda_max_one_keeps_all(traces, tmp_path):
    train, _ = traces
    out = tmp_path / "m1.json"
    assert run("fit", "--train", train, "--out", out, *SMALL, "--lambda-max", 1.0) == 0
    rep = json.loads((tmp_path / "m1.fit.json").read_text())
    assert rep["alpha_f"] and sorted(rep["alpha_f"]) == sorted(rep["alpha_s"])


def test_fit_sweep(traces, tmp_path):
    train, _ = traces
    sweep = tmp_path / "sweep.csv"
    assert run("fit", "--train", train, "--out", tmp_path / "m.json", *SMALL,
               "--sweep-lambda-max", sweep) == 0
    rows = list(csv.DictReader(sweep.open()))
    assert len(rows) == 20 and rows[-1]["lambda_max"] == "1.0"
    mses = [float(r["mse"]) for r in rows]
    assert all(b <= a + 1e-8 for a, b in zip(mses, mses[1:]))


def test_fit_short_trace_exits_2(tmp_path, capsys):
    short = tmp_path / "s.csv"
    assert run("gen", "--ge", "0.01,0.05,0.95,0.4", "--n", 100, "--seed", 1, "--out", short) == 0
    assert run("fit", "--train", short, "--out", tmp_path / "m.json") == 2
    err = capsys.readouterr().err
    assert "7201" in err and "n_skip" in err


def test_fit_config_file_and_flag_precedence(traces, tmp_path):
    train, _ = traces
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n_future = 50\nn_skip = 50\nn_lower = 2\nn_upper = 2\nlambda_max = 0.5\n")
    out = tmp_path / "m.json"
    assert run("fit", "--train", train, "--out", out, "--config", cfg, "--n-upper", 3) == 0
    rep = json.loads((tmp_path / "m.fit.json").read_text())
    assert rep["config"]["n_lower"] == 2 and rep["config"]["n_upper"] == 3
    assert rep["config"]["lambda_max"] == 0.5


def test_fit_bad_config_exits_2(traces, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("ratio = 0.5\n")
    assert run("fit", "--train", traces[0], "--out", tmp_path / "m.json", "--config", cfg) == 2


def test_eval_is_byte_identical(traces, tmp_path):
    train, test = traces
    model = tmp_path / "m.json"
    assert run("fit", "--train", train, "--out", model, *SMALL) == 0
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        assert run("eval", "--model", model, "--test", test, "--out", out,
                   "--emit-series", tmp_path / f"s{k}.csv", "--series-stride", 100) == 0
        outs.append((out.read_bytes(), out.with_suffix(".csv").read_bytes(),
                     (tmp_path / f"s{k}.csv").read_bytes()))
    assert outs[0] == outs[1]
    doc = json.loads(outs[0][0])
    assert doc["n_future"] == 50 and doc["evaluation_count"] == 20_000 - 100
    lines = outs[0][2].decode().splitlines()
    assert lines[0] == "i,t_i,y_i" and lines[1].startswith("51,")


def test_eval_ema_alpha(traces, tmp_path):
    _, test = traces
    out = tmp_path / "ema.json"
    assert run("eval", "--ema-alpha", 0.01, "--test", test, "--out", out,
               "--n-future", 50, "--n-skip", 50) == 0
    assert json.loads(out.read_text())["evaluation_count"] == 20_000 - 100
    assert run("eval", "--test", test, "--out", out) == 2


def test_eval_corrupt_model_names_field(traces, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    doc = ElcModel((0.01, 0.1), (0.5, 0.5)).to_dict()
    doc["lambdas"][1] = "oops"
    bad.write_text(json.dumps(doc))
    assert run("eval", "--model", bad, "--test", traces[1], "--out", tmp_path / "r.json") == 2
    assert "lambdas[1]" in capsys.readouterr().err
    bad.write_text("{ truncated")
    assert run("eval", "--model", bad, "--test", traces[1], "--out", tmp_path / "r.json") == 2


def test_compare_table(traces, tmp_path, capsys):
    train, test = traces
    out = tmp_path / "cmp.csv"
    assert run("compare", "--train", train, "--test", test, "--out", out, *SMALL) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["model"] for r in rows] == ["EMA", "ELC"]
    assert list(rows[0]) == ["model", "params", *TABLE_COLUMNS]
    doc = json.loads(out.with_suffix(".json").read_text())
    assert "mse_reduction_pct" in doc
    assert "EMA" in capsys.readouterr().out


def test_compare_degenerate_config_rows_match(traces, tmp_path):
    train, test = traces
    out = tmp_path / "cmp.csv"
    assert run("compare", "--train", train, "--test", test, "--out", out,
               "--n-future", 50, "--n-skip", 50, "--n-lower", 0, "--n-upper", 0,
               "--lambda-max", 1.0) == 0
    ema, elc = csv.DictReader(out.open())
    for col in TABLE_COLUMNS:
        assert ema[col] == elc[col]


def test_missing_input_exits_3(tmp_path):
    assert run("fit", "--train", tmp_path / "nope.fdrt", "--out", tmp_path / "m.json") == 3
    assert run("eval", "--model", tmp_path / "nope.json", "--test", tmp_path / "t.csv",
               "--out", tmp_path / "r.json") == 3


def test_corrupt_trace_exits_2(tmp_path):
    bad = tmp_path / "bad.fdrt"
    bad.write_bytes(b"NOPE" + bytes(20))
    assert run("fit", "--train", bad, "--out", tmp_path / "m.json") == 2


def test_console_entry_point(tmp_path):
    exe = shutil.which("elc")
    cmd = [exe] if exe else [sys.executable, "-m", "elc"]
    proc = subprocess.run(cmd + ["gen", "--n", "10", "--ge", "0,0,1,1", "--out",
                                 str(tmp_path / "x.csv")], capture_output=True, text=True)
    assert proc.returncode == 2 and "--seed" in proc.stderr
    proc = subprocess.run(cmd + ["--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "elc" in proc.stdout
