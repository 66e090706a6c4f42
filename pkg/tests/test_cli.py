import json
import subprocess
import sys

import numpy as np
import pytest

from scorematch.cli import builtin_configs, main


def _run(*argv):
    return main([str(a) for a in argv])


def _json(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def chain_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("chain")
    assert _run("simulate", "--design", "chain", "--m", 8, "--n", 300, "--seed", 4, "--out", out) == 0
    return out


def test_simulate_outputs_and_manifest(chain_run):
    assert {p.name for p in chain_run.iterdir()} == {"data.csv", "truth.json", "manifest.json"}
    man = _json(chain_run / "manifest.json")
    assert man["command"] == "simulate" and man["seed"] == 4
    assert man["argv"][:3] == ["simulate", "--design", "chain"]
    for key in ("config", "inputs", "outputs", "version", "wall_time_s"):
        assert key in man
    X = np.loadtxt(chain_run / "data.csv", delimiter=",")
    assert X.shape == (300, 8)


def test_simulate_is_deterministic(chain_run, tmp_path):
    _run("simulate", "--design", "chain", "--m", 8, "--n", 300, "--seed", 4, "--out", tmp_path)
    assert (tmp_path / "data.csv").read_bytes() == (chain_run / "data.csv").read_bytes()
    assert _json(tmp_path / "truth.json") == _json(chain_run / "truth.json")


@pytest.mark.parametrize("argv", [
    ["--design", "normal-conditionals", "--side", 3, "--n", 20, "--burnin", 5, "--thin", 1],
    ["--design", "truncated-blocks", "--blocks", 2, "--block-size", 3, "--n", 20, "--burnin", 5, "--thin", 1],
    ["--design", "mvt", "--m", 6, "--n", 20],
    ["--design", "contaminated", "--m", 6, "--n", 50],
    ["--design", "star", "--m", 12, "--d", 10, "--n", 20],
])
def test_simulate_designs(argv, tmp_path):
    assert _run("simulate", *argv, "--out", tmp_path) == 0
    assert (tmp_path / "data.csv").exists()


def test_simulate_missing_design_parameter(tmp_path, capsys):
    assert _run("simulate", "--design", "star", "--n", 10, "--out", tmp_path) == 2
    assert "--m" in capsys.readouterr().err


def test_fit_path_with_endpoint_check(chain_run, tmp_path):
    assert _run("fit", "--data", chain_run / "data.csv", "--verify", "--out", tmp_path) == 0
    obj = _json(tmp_path / "path.json")
    assert obj["endpoint_check"]["passed"]
    assert obj["endpoint_check"]["max_abs_error"] <= 1e-8
    assert len(obj["knots"]) == len(obj["kkt_residual_at_knots"])
    header = (tmp_path / "path.csv").read_text().splitlines()[0]
    assert header == "lambda,coordinate,value,t"


def test_fit_huge_lambda_gives_empty_graph(chain_run, tmp_path):
    assert _run("fit", "--data", chain_run / "data.csv", "--solver", "cd", "--lambda", 1e9,
                "--out", tmp_path) == 0
    est = _json(tmp_path / "estimate.json")["estimates"][0]
    assert est["edges"] == [] and est["converged"]


def test_fit_group_penalty_reports_norms(tmp_path):
    sim = tmp_path / "sim"
    _run("simulate", "--design", "normal-conditionals", "--side", 3, "--n", 200, "--burnin", 20,
         "--thin", 2, "--out", sim)
    out = tmp_path / "fit"
    assert _run("fit", "--data", sim / "data.csv", "--family", "normal-conditionals", "--solver", "cd",
                "--penalty", "group", "--lambda", 0.05, "--out", out) == 0
    est = _json(out / "estimate.json")["estimates"][0]
    assert len(est["group_norms"]) == len(est["edges"]) > 0
    assert all(g["norm"] > 0 for g in est["group_norms"])


def test_truncated_family_rejects_negative_data(chain_run, tmp_path, capsys):
    code = _run("fit", "--data", chain_run / "data.csv", "--family", "truncated-gaussian", "--out", tmp_path)
    assert code == 2
    assert "non-negative" in capsys.readouterr().err


def test_path_solver_rejects_group_penalty(chain_run, tmp_path):
    assert _run("fit", "--data", chain_run / "data.csv", "--penalty", "group", "--out", tmp_path) == 2


def test_unknown_family_is_argparse_error(chain_run, tmp_path):
    with pytest.raises(SystemExit) as info:
        _run("fit", "--data", chain_run / "data.csv", "--family", "poisson", "--out", tmp_path)
    assert info.value.code == 2


def test_missing_data_file(tmp_path):
    assert _run("fit", "--data", tmp_path / "nope.csv", "--out", tmp_path) == 1


def test_tune_records_gamma(chain_run, tmp_path):
    assert _run("tune", "--data", chain_run / "data.csv", "--out", tmp_path) == 0
    sel = _json(tmp_path / "selection.json")
    assert sel["gamma"] == 0.5 and sel["scale_loss_by_n"]
    assert _json(tmp_path / "manifest.json")["gamma"] == 0.5


def test_tune_single_lambda(chain_run, tmp_path):
    _run("tune", "--data", chain_run / "data.csv", "--solver", "cd", "--lambda", 0.2, "--out", tmp_path)
    assert _json(tmp_path / "selection.json")["lambda"] == 0.2


def test_diagnose_chain(chain_run, tmp_path):
    assert _run("diagnose", "--truth", chain_run / "truth.json", "--out", tmp_path) == 0
    rep = _json(tmp_path / "report.json")
    # same constants as the library-level regression test
    assert rep["alpha"] == pytest.approx(0.4, abs=1e-9)
    assert rep["c_theta_star"] == pytest.approx(1.6, abs=1e-9)
    assert "with-diag" in rep["variants"]


def test_diagnose_meinshausen(tmp_path):
    assert _run("diagnose", "--meinshausen", "--out", tmp_path) == 0
    assert 0.365 < _json(tmp_path / "report.json")["threshold"] < 0.367


def test_diagnose_needs_truth(tmp_path):
    assert _run("diagnose", "--out", tmp_path) == 2


def test_eval_writes_roc_and_auc(chain_run, tmp_path):
    assert _run("eval", "--data", chain_run / "data.csv", "--truth", chain_run / "truth.json",
                "--families", "gaussian", "gaussian-centered", "--out", tmp_path) == 0
    auc = _json(tmp_path / "auc.json")
    assert set(auc) == {"gaussian", "gaussian-centered"}
    assert all(0 <= v <= 1 for v in auc.values())
    assert (tmp_path / "roc_gaussian.csv").read_text().startswith("lambda,fpr,tpr")


def test_verify(chain_run, capsys):
    assert _run("verify", "--data", chain_run / "data.csv") == 0
    assert json.loads(capsys.readouterr().out)["passed"]


def test_experiment_bundled_config(tmp_path):
    assert "chain_smoke" in builtin_configs()
    assert _run("experiment", "--config", "chain_smoke", "--trials", 2, "--threads", 2, "--out", tmp_path) == 0
    lines = (tmp_path / "recovery.csv").read_text().splitlines()
    assert lines[0] == "value,m,n,rescaled_n,success,trials,c" and len(lines) == 4
    assert "crossing_n50" in _json(tmp_path / "alignment.json")
    assert _json(tmp_path / "manifest.json")["threads"] == 2


def test_experiment_missing_field(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"values": [10], "n_multiples": [5]}))
    assert _run("experiment", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "'design'" in capsys.readouterr().err


def test_experiment_unknown_config(tmp_path):
    assert _run("experiment", "--config", "no_such_config", "--out", tmp_path) == 1


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "scorematch.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip().startswith("scorematch")
