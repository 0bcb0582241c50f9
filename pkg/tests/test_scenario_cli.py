import filecmp
import json

import pytest
from click.testing import CliRunner

from rouleaux import cli
from rouleaux.scenario import (ScenarioError, load_scenario, read_csv,
                               run_scenario, scenario_from_dict)

TINY = {
    "name": "tiny",
    "alpha": [0.0, 0.0, 1.0],
    "truncation_R": 32,
    "rtol": 1e-7,
    "initial": {"points": [[2, 3, 1.0]]},
    "checkpoints": {"tau_max": 1.2, "count": 8},
    "laplace": {"rho_max": 5.0, "n_rho": 16},
    "stochastic": {"volume": 500, "seeds": [0, 1],
                   "checkpoint_fractions": [0.2, 0.4]},
}


def test_bundled_scenarios_load():
    for name in ("case3_delta23", "case3_mix", "nogel_line_a2", "mixed_delta22"):
        sc = load_scenario(name)
        assert sc.name == name
        assert len(sc.content_hash()) == 16


def test_validation_errors():
    bad = dict(TINY, initial={"points": [[2, 1, 1.0]]})
    with pytest.raises(ScenarioError, match="c >= 2, a >= 2"):
        scenario_from_dict(bad)
    with pytest.raises(ScenarioError, match="alpha"):
        scenario_from_dict(dict(TINY, alpha=[0, 0, 0]))
    with pytest.raises(ScenarioError, match="weight"):
        scenario_from_dict(dict(TINY, initial={"points": [[2, 2, -1.0]]}))
    with pytest.raises(ScenarioError, match="missing"):
        scenario_from_dict({"alpha": [1, 0, 0]})


def test_family_specs():
    sc = scenario_from_dict({"alpha": [1, 0, 0],
                             "initial": {"family": "monodisperse", "c": 3,
                                         "a": 2, "weight": 2.0}})
    assert sc.initial_points == [(3, 2, 2.0)]
    sc = scenario_from_dict({"alpha": [1, 0, 0],
                             "initial": {"family": "two_point", "c1": 2, "a1": 3,
                                         "w1": 1.0, "c2": 2, "a2": 5, "w2": 0.5}})
    assert len(sc.initial_points) == 2


def test_pipeline_reproducibility(tmp_path):
    sc = scenario_from_dict(dict(TINY))
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    run_scenario(sc, out1, workers=1, progress=lambda *_: None)
    run_scenario(sc, out2, workers=1, progress=lambda *_: None)
    names = sorted(p.name for p in out1.iterdir())
    assert names == sorted(p.name for p in out2.iterdir())
    for name in names:
        assert filecmp.cmp(out1 / name, out2 / name, shallow=False), name


def test_artifact_contents(tmp_path):
    sc = scenario_from_dict(dict(TINY))
    res = run_scenario(sc, tmp_path / "out", workers=1, progress=lambda *_: None)
    rep = json.loads((tmp_path / "out" / "gelation_report.json").read_text())
    assert rep["gelates"] is True
    assert abs(rep["t_star"] - 1 / 3) < 1e-6
    meta, cols, rows = read_csv(tmp_path / "out" / "selfsim.csv")
    assert cols == ["tau", "Z", "m2_dev", "m3_dev", "m4_norm", "loc_p2", "loc_p3"]
    assert meta and meta[0].startswith("scenario=tiny hash=")
    meta, cols, rows = read_csv(tmp_path / "out" / "ensemble.csv")
    assert cols[:2] == ["run_id", "t"] and len(rows) == 4


def test_cli_run_and_report(tmp_path):
    runner = CliRunner()
    cfg = tmp_path / "tiny.toml"
    cfg.write_text(
        'name = "tiny"\nalpha = [0.0, 0.0, 1.0]\ntruncation_R = 32\n'
        'rtol = 1e-7\n[initial]\npoints = [[2, 3, 1.0]]\n'
        '[checkpoints]\ntau_max = 1.0\ncount = 6\n')
    out = tmp_path / "out"
    result = runner.invoke(cli.main, ["run", str(cfg), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert (out / "gelation_report.json").exists()
    result = runner.invoke(cli.main, ["report", str(out)])
    assert result.exit_code == 0
    assert "gelates: True" in result.output
    assert "T* = 0.333333" in result.output


def test_cli_config_error_exit_code(tmp_path):
    runner = CliRunner()
    cfg = tmp_path / "bad.toml"
    cfg.write_text('name = "bad"\nalpha = [1.0, 0.0, 0.0]\n'
                   '[initial]\npoints = [[2, 1, 1.0]]\n')
    result = runner.invoke(cli.main, ["run", str(cfg)])
    assert result.exit_code == 2
    assert "configuration error" in result.output


def test_cli_missing_scenario():
    runner = CliRunner()
    result = runner.invoke(cli.main, ["run", "no_such_scenario"])
    assert result.exit_code == 2


def test_cli_verify_table_shape(monkeypatch):
    from rouleaux import acceptance

    def stub_pass():
        res = acceptance.CriterionResult(1, "stub criterion")
        res.add("value check", 1.0, "<= 2", True)
        return res

    def stub_fail():
        res = acceptance.CriterionResult(2, "tampered tolerance")
        res.add("measured value", 3.25, "<= 2", False)
        return res

    monkeypatch.setattr(cli, "run_suite",
                        lambda name, progress=None: [stub_pass(), stub_fail()])
    runner = CliRunner()
    result = runner.invoke(cli.main, ["verify", "oracles"])
    assert result.exit_code == 1            # a failing row fails the suite
    assert "stub criterion" in result.output
    assert "3.25" in result.output and "FAIL" in result.output
