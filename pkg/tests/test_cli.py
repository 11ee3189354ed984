import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from levy_window import __version__
from levy_window.cli import EXIT_DATA, EXIT_DIAGNOSTIC, EXIT_NOINPUT, EXIT_OK, EXIT_USAGE, dumps, main
from levy_window.market import read_csv

DATA = Path(__file__).parent / "data"
ALPHA15 = str(DATA / "alpha15_window.csv")
GAUSS = str(DATA / "gaussian.csv")


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# ---------------------------------------------------------------- writer

def test_dumps_floats_and_nan():
    text = dumps({"a": 0.1, "b": float("nan"), "c": [1, True, None], "d": np.float64(1 / 3)})
    obj = json.loads(text)
    assert obj["a"] == 0.1 and obj["b"] is None and obj["c"] == [1, True, None]
    assert '"d": 0.33333333333333331' in text
    assert float(obj["d"]) == 1 / 3


def test_dumps_preserves_key_order():
    assert list(json.loads(dumps({"z": 1, "a": 2}))) == ["z", "a"]


def test_dumps_rejects_unknown_types():
    with pytest.raises(TypeError):
        dumps({"x": object()})


# ---------------------------------------------------------------- simulate / table

def test_simulate_byte_identical(tmp_path, capsys):
    args = ["simulate", "--n", 2000, "--seed", 5, "--mode", "window"]
    _, a, _ = run(args, capsys)
    _, b, _ = run(args, capsys)
    _, c, _ = run(["simulate", "--n", 2000, "--seed", 6, "--mode", "window"], capsys)
    assert a == b and a != c
    assert a.startswith("timestamp,log_price\n")


def test_simulate_round_trip_through_estimate(tmp_path, capsys):
    path = tmp_path / "sim.csv"
    assert run(["simulate", "--n", 20000, "--seed", 2, "--mode", "window", "--output", path], capsys)[0] == 0
    assert len(read_csv(path)) == 20001
    code, out, _ = run(["estimate", "--input", path, "--se-method", "sandwich"], capsys)
    rep = json.loads(out)["result"]
    assert code in (EXIT_OK, EXIT_DIAGNOSTIC)
    assert rep["diagnostics"]["dropped_horizons"] == []


def test_stable_table_formats(capsys):
    code, out, _ = run(["stable-table", "--alpha", 2, "--num", 5, "--format", "csv"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "z,pdf,cdf" and len(lines) == 6
    z, pdf, cdf = map(float, lines[3].split(","))
    assert z == 0.0 and pdf == pytest.approx(1 / math.sqrt(4 * math.pi)) and cdf == pytest.approx(0.5)
    code, out, _ = run(["stable-table", "--alpha", 1.5, "--num", 3], capsys)
    rows = json.loads(out)["result"]["rows"]
    assert len(rows) == 3 and rows[1]["z"] == 0.0


# ---------------------------------------------------------------- estimate

def test_estimate_alpha_fixture(capsys):
    code, out, _ = run(["estimate", "--input", ALPHA15, "--replicates", 100], capsys)
    rep = json.loads(out)
    assert code == EXIT_OK
    assert 1.4 <= rep["result"]["slope_fit"]["alpha_hat"] <= 1.6
    assert rep["result"]["verdict"] == "levy window"
    assert rep["version"] == __version__ and rep["seed"] == 0
    assert rep["config"]["replicates"] == 100


def test_estimate_gaussian_fixture(capsys):
    code, out, _ = run(["estimate", "--input", GAUSS, "--replicates", 100], capsys)
    assert code == EXIT_DIAGNOSTIC
    assert json.loads(out)["result"]["verdict"] == "no Levy window"


def test_estimate_byte_identical_across_threads(capsys):
    base = ["estimate", "--input", ALPHA15, "--replicates", 40, "--seed", 3]
    _, a, _ = run(base + ["--threads", 1], capsys)
    _, b, _ = run(base + ["--threads", 1], capsys)
    _, c, _ = run(base + ["--threads", 4], capsys)
    assert a == b
    strip = lambda s: {k: v for k, v in json.loads(s).items() if k != "config"}  # noqa: E731
    assert strip(a) == strip(c)


def test_missing_input_file(tmp_path, capsys):
    code, _, err = run(["estimate", "--input", tmp_path / "absent.csv"], capsys)
    assert code == EXIT_NOINPUT and "no such file" in err


def test_malformed_input(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,price\n0,1\n1,oops\n")
    code, _, err = run(["estimate", "--input", bad], capsys)
    assert code == EXIT_DATA and "line 3" in err


def test_short_series_is_data_error(tmp_path, capsys):
    f = tmp_path / "short.csv"
    f.write_text("timestamp,log_price\n" + "".join(f"{i},{0.01 * i * (-1) ** i}\n" for i in range(50)))
    assert run(["estimate", "--input", f], capsys)[0] == EXIT_DATA


# ---------------------------------------------------------------- usage

@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["estimate", "--bogus", "1"],
    ["estimate"],
    ["metrics"],
    ["metrics", "--alpha", "1.5", "--format", "xml"],
    ["metrics", "--alpha", "abc"],
    ["metrics", "--alpha", "0.7"],
])
def test_usage_errors(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as e:
        code = e.code
    assert code == EXIT_USAGE


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    assert __version__ in capsys.readouterr().out


# ---------------------------------------------------------------- metrics

def test_metrics_gaussian_bias_zero(capsys):
    code, out, _ = run(["metrics", "--alpha", 2, "--sigma", 0.01, "--mu", 1e-4, "--orders", "1.1,1.5",
                        "--active-alpha", 2, "--active-sigma", 0.004, "--active-mu", 1e-5], capsys)
    assert code == 0
    m = json.loads(out)["result"]["metrics"]
    for key in ("var", "es", "sharpe_p", "info_ratio_p", "drawdown_p", "drawdown_quantile"):
        assert m[key]
        for row in m[key]:
            assert abs(row["bias"]) < 1e-12


def test_metrics_from_estimate_file(tmp_path, capsys):
    est = tmp_path / "est.json"
    run(["estimate", "--input", ALPHA15, "--se-method", "sandwich", "--output", est], capsys)
    code, out, _ = run(["metrics", "--estimate", est, "--taus", "1 2 4"], capsys)
    body = json.loads(out)["result"]
    fitted = json.loads(est.read_text())["result"]["fitted_params"]
    assert code == 0
    assert body["params"]["alpha"] == fitted["alpha"] and body["tau0"] == fitted["tau0"]
    assert len(body["metrics"]["var"]) == 6


def test_metrics_csv_matches_json(capsys):
    args = ["metrics", "--alpha", 1.5, "--sigma", 0.02, "--mu", 1e-4, "--taus", "1,4"]
    m = json.loads(run(args, capsys)[1])["result"]["metrics"]
    code, out, _ = run(args + ["--format", "csv"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "metric,tau,level_or_order,levy,gaussian,bias,f_star,f_max"
    assert len(lines) == 1 + sum(len(v) for v in m.values())
    var4 = next(r for r in m["var"] if r["tau"] == 4 and r["level_or_order"] == 0.01)
    row = next(ln.split(",") for ln in lines if ln.startswith("var,4,0.01,"))
    assert float(row[5]) == var4["bias"]
    kelly = [ln.split(",") for ln in lines if ln.startswith("kelly,")]
    assert kelly and all(k[3] == "" and float(k[6]) > 0 for k in kelly)


def test_estimate_csv(capsys):
    args = ["estimate", "--input", ALPHA15, "--se-method", "sandwich"]
    cm = json.loads(run(args, capsys)[1])["result"]["central_mass"]
    code, out, _ = run(args + ["--format", "csv"], capsys)
    lines = out.splitlines()
    assert code == EXIT_OK and lines[0] == "tau,p0_hat,center,s_value"
    assert len(lines) == 1 + len(cm["horizons"])
    assert float(lines[1].split(",")[1]) == cm["p0_hat"][0]


def test_metrics_byte_identical(capsys):
    args = ["metrics", "--alpha", 1.5, "--sigma", 0.02, "--mu", 1e-4, "--taus", "1,4,16"]
    assert run(args, capsys)[1] == run(args, capsys)[1]


# ---------------------------------------------------------------- backtest

def test_backtest_fixture_levy_within_bound(capsys):
    code, out, _ = run(["backtest", "--input", ALPHA15, "--alpha", 1.5, "--tau0", 1], capsys)
    body = json.loads(out)["result"]
    assert code == EXIT_OK and body["passed"]
    assert all(abs(r["z_score"]) <= 3 for r in body["results"] if r["mode"] == "levy")


def test_backtest_z_gate(capsys):
    code, out, _ = run(["backtest", "--input", ALPHA15, "--alpha", 1.5, "--z-bound", 0.01], capsys)
    assert code == EXIT_DIAGNOSTIC and not json.loads(out)["result"]["passed"]


def test_backtest_csv_and_both_metrics(capsys):
    code, out, _ = run(["backtest", "--input", ALPHA15, "--alpha", 1.5, "--metric", "both",
                        "--format", "csv", "--horizons", "1,2"], capsys)
    lines = out.splitlines()
    assert lines[0].startswith("tau,q,n_obs")
    assert len(lines) == 1 + 2 * 2 * 2


def test_backtest_unknown_metric(capsys):
    assert run(["backtest", "--input", ALPHA15, "--alpha", 1.5, "--metric", "es"], capsys)[0] == EXIT_USAGE


# ---------------------------------------------------------------- config files

def test_config_json_nested_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid": {"tau_lo": 2, "per_decade": 6}, "bootstrap": {"replicates": 7},
                               "se_method": "bootstrap"}))
    code, out, _ = run(["estimate", "--input", ALPHA15, "--config", cfg, "--replicates", 9], capsys)
    rep = json.loads(out)
    assert rep["config"]["tau_lo"] == 2 and rep["config"]["per_decade"] == 6
    assert rep["config"]["replicates"] == 9
    assert rep["result"]["central_mass"]["horizons"][0] == 2


def test_config_key_value(tmp_path, capsys):
    cfg = tmp_path / "c.conf"
    cfg.write_text("# model\nalpha = 1.7\nsigma=0.02\ntaus = 1, 2\n")
    code, out, _ = run(["metrics", "--config", cfg], capsys)
    body = json.loads(out)
    assert code == 0 and body["config"]["alpha"] == 1.7 and body["config"]["taus"] == [1.0, 2.0]


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "c.conf"
    cfg.write_text("nonsense = 1\n")
    assert run(["metrics", "--alpha", 1.5, "--config", cfg], capsys)[0] == EXIT_USAGE


def test_config_bad_json(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    assert run(["metrics", "--alpha", 1.5, "--config", cfg], capsys)[0] == EXIT_USAGE


# ---------------------------------------------------------------- entry point

def test_module_entry_point(tmp_path):
    env = {**os.environ, "LEVY_WINDOW_THREADS": "2"}
    out = subprocess.run([sys.executable, "-m", "levy_window", "stable-table", "--num", "3", "--format", "csv"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.splitlines()[0] == "z,pdf,cdf"
