import json
import logging
import math
import shutil

import numpy as np
import pytest

from scalelaw import cli
from scalelaw.collection import plateau_scenarios
from scalelaw.curve_data import load_manifest, make_curve, write_curve


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def curve_file(tmp_path):
    # smooth curve, fit points first
    n = [10, 20, 30, 40, 50, 100, 200, 400, 800]
    v = [float(-np.expm1(0.1 - 0.08 * np.log(k) - 0.03 * np.log(k) ** 2)) for k in n]
    path = tmp_path / "curve.csv"
    write_curve(make_curve("curve", 10, zip(n, v)), path)
    return path


@pytest.fixture
def powerlaw_file(tmp_path):
    n = np.unique(np.round(np.geomspace(10, 1e5, 200))).astype(int)
    v = 1 - (0.9 * n**-0.4 + 0.02)
    path = tmp_path / "powerlaw.csv"
    write_curve(make_curve("powerlaw", 10, zip(n, v)), path)
    return path


@pytest.fixture(scope="module")
def dictionary(tmp_path_factory):
    out = tmp_path_factory.mktemp("dict")
    assert cli.main(["synth", "--count", "40", "--seed", "0", "--out", str(out)]) == 0
    return out / "manifest.json"


def test_synth_writes_dictionary(dictionary):
    d = load_manifest(dictionary)
    assert len(d) == 40 and all(c.fit_count == 5 for c in d)
    run_doc = json.loads((dictionary.parent / "run.json").read_text())
    assert run_doc["command"] == "synth" and run_doc["config"]["seed"] == 0


def test_fit_writes_three_outputs(curve_file, tmp_path, capsys):
    out = tmp_path / "fit"
    assert run("fit", curve_file, "--classes", 10, "--m", 5, "--switch", "fixed:1000", "--out", out) == 0
    for name in ("fit.txt", "band.csv", "fit.svg", "run.json"):
        assert (out / name).exists()
    assert "family = ppl" in capsys.readouterr().out
    svg = (out / "fit.svg").read_text()
    assert svg.startswith("<svg") and "<polyline" in svg and "<polygon" in svg
    band = (out / "band.csv").read_text().splitlines()
    assert band[0].startswith("# scalelaw") and "n,y_hat,sigma2_y,mu_v,sigma_v" in band
    doc = json.loads((out / "run.json").read_text())
    assert doc["config"]["switch"] == "fixed:1000.0" and "created" in doc


def test_fit_missing_file(tmp_path):
    assert run("fit", tmp_path / "nope.csv", "--classes", 3, "--out", tmp_path / "x") == 1


def test_fit_single_branch_is_degenerate(curve_file, tmp_path):
    assert run("fit", curve_file, "--classes", 10, "--m", 5, "--switch", "fixed:1", "--out", tmp_path / "d") == 2


def test_fit_non_converged_is_error(powerlaw_file, tmp_path):
    code = run("fit", powerlaw_file, "--classes", 10, "--family", "powerlaw3", "--max-iter", 1,
               "--out", tmp_path / "nc")
    assert code == 1


@pytest.mark.parametrize("bad", [["--switch", "bogus"], ["--switch", "fixed:-3"], ["--m", "0"],
                                 ["--family", "cubic"], ["--gtol", "-1"]])
def test_bad_flags_exit_one(curve_file, tmp_path, bad):
    with pytest.raises(SystemExit) as exc:
        run("fit", curve_file, "--classes", 10, "--out", tmp_path / "b", *bad)
    assert exc.value.code == 1


def test_classes_required(curve_file, tmp_path):
    assert run("fit", curve_file, "--out", tmp_path / "c") == 1


def test_meta_switch_needs_model(curve_file, tmp_path):
    assert run("fit", curve_file, "--classes", 10, "--switch", "meta", "--out", tmp_path / "c") == 1


def test_extrapolate(curve_file, tmp_path, capsys):
    out = tmp_path / "ex"
    assert run("extrapolate", curve_file, "--classes", 10, "--m", 5, "--switch", "fixed:1000", "--out", out) == 0
    lines = (out / "extrapolate.csv").read_text().splitlines()
    assert "n,v_true,v_pred,mu_v,sigma_v" in lines
    assert len([ln for ln in lines if not ln.startswith("#")]) == 1 + 4
    assert "E_perf" in capsys.readouterr().out


def test_estimate_data_powerlaw_one_step(powerlaw_file, tmp_path, capsys):
    out = tmp_path / "est"
    code = run("estimate-data", powerlaw_file, "--classes", 10, "--m", 5, "--family", "powerlaw3",
               "--target", 0.85, "--out", out)
    assert code == 0
    assert "K = 1" in capsys.readouterr().out
    assert "# K = 1" in (out / "trace.csv").read_text()


def test_estimate_data_plateau_powerlaw_overestimates(tmp_path, capsys):
    sc = plateau_scenarios(1, seed=0)[0]
    n = np.unique(np.round(np.geomspace(sc.init[0].n, 100 * sc.target_size, 300))).astype(int)
    table = tmp_path / "plateau.csv"
    write_curve(make_curve("plateau", sc.classes, zip(n, sc.oracle.true_score(n))), table)
    code = run("estimate-data", table, "--classes", sc.classes, "--m", 5, "--family", "powerlaw3",
               "--target", sc.v_target, "--out", tmp_path / "p")
    assert code == 0
    doc = json.loads((tmp_path / "p" / "run.json").read_text())
    e = doc["summary"]["e_data"]
    assert e == "inf" or float(e) > 1.0


def test_estimate_data_unreachable(powerlaw_file, tmp_path, capsys):
    code = run("estimate-data", powerlaw_file, "--classes", 10, "--m", 5, "--target", 0.999,
               "--out", tmp_path / "u")
    assert code == 3
    assert "unreachable" in capsys.readouterr().err


def test_estimate_data_needs_target(powerlaw_file, tmp_path):
    assert run("estimate-data", powerlaw_file, "--classes", 10, "--m", 5, "--out", tmp_path / "t") == 1


def test_train_eval_loo(dictionary, tmp_path):
    out = tmp_path / "loo"
    assert run("eval-loo", dictionary, "--n-trees", 10, "--out", out) == 0
    rows = [ln for ln in (out / "loo.csv").read_text().splitlines() if not ln.startswith("#")]
    assert rows[0] == "name,n_star,n_hat,e_perf_ppl,e_perf_powerlaw3"
    assert len(rows) == 41


def test_meta_model_reload_identical(dictionary, curve_file, tmp_path):
    assert run("train-meta", dictionary, "--n-trees", 10, "--out", tmp_path / "meta") == 0
    model = tmp_path / "meta" / "meta_model.json"
    args = ["fit", curve_file, "--classes", 10, "--m", 5, "--switch", "meta", "--meta-model", model]
    run(*args, "--out", tmp_path / "f1")
    run(*args, "--out", tmp_path / "f2")
    a = (tmp_path / "f1" / "fit.txt").read_text()
    b = (tmp_path / "f2" / "fit.txt").read_text()
    assert a == b and "N = " in a


def test_one_curve_manifest_fails(tmp_path):
    c = make_curve("only", 2, [(2, 0.1), (4, 0.2), (6, 0.3), (8, 0.35), (10, 0.4), (20, 0.5)], fit_count=5)
    write_curve(c, tmp_path / "only.csv")
    (tmp_path / "m.json").write_text(json.dumps([{"path": "only.csv", "name": "only", "classes": 2,
                                                  "task": "classification", "fit_count": 5}]))
    assert run("train-meta", tmp_path / "m.json", "--out", tmp_path / "o") == 1
    assert run("eval-loo", tmp_path / "m.json", "--out", tmp_path / "o") == 1


def test_simulate(tmp_path, capsys):
    out = tmp_path / "sim"
    assert run("simulate", "--count", 4, "--tau", 0.05, "--max-steps", 5, "--out", out) == 0
    rows = [ln for ln in (out / "simulate.csv").read_text().splitlines() if not ln.startswith("#")]
    assert len(rows) == 5 and rows[0].startswith("name,classes,v_target")


def _csvs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.suffix in (".csv", ".txt", ".svg", ".json")
            and p.name != "run.json"}


@pytest.mark.parametrize("argv", [
    ["synth", "--count", "5", "--seed", "3"],
    ["simulate", "--count", "3", "--tau", "0.05", "--max-steps", "3", "--seed", "2"],
])
def test_rerun_byte_identical(tmp_path, argv):
    assert cli.main(argv + ["--out", str(tmp_path / "a")]) == 0
    first = _csvs(tmp_path / "a")
    shutil.rmtree(tmp_path / "a")
    assert cli.main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert _csvs(tmp_path / "a") == first


def test_env_log_level(monkeypatch):
    monkeypatch.setenv("SCALELAW_LOG", "debug")
    cli.configure_logging()
    assert logging.getLogger().level == logging.DEBUG
    monkeypatch.setenv("SCALELAW_LOG", "nonsense")
    cli.configure_logging()
    assert logging.getLogger().level == logging.WARNING
    monkeypatch.setenv("SCALELAW_LOG", "40")
    cli.configure_logging()
    assert logging.getLogger().level == 40


def test_parse_switch():
    assert cli.parse_switch("fixed:12.5") == 12.5
    assert cli.parse_switch("brute") == "brute"
    with pytest.raises(Exception):
        cli.parse_switch("fixed:abc")
