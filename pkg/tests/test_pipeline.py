from __future__ import annotations

import json

import numpy as np
import pytest

from creditale import cli
from creditale.dataset import FEATURES, load_csv
from creditale.errors import ConfigError
from creditale.models import FAMILIES, load_model
from creditale.pipeline import (
    DataSource,
    ExperimentConfig,
    IndexTracker,
    InterpretSettings,
    derive_seed,
    emit_outputs,
    expand_grid,
    load_report_models,
    prepare_data,
    run_experiment,
    strip_timestamps,
)

SMALL = {
    "seed": 5,
    "data": {"synthetic": {"n": 3000}},
    "mccv_iterations": 2,
    "grids": {"gev": {"xi": [-0.1, 0.1]}, "gbt": {"max_depth": [2], "learning_rate": [0.3]}},
    "fixed": {"fann": {"epochs": 10}, "gbt": {"n_trees": 20}},
    "interpret": {"bins": 10, "bootstrap": 5, "shapley_sample": 4, "shapley_background": 10,
                  "shapley_permutations": 20},
}


def small_config(**over) -> ExperimentConfig:
    return ExperimentConfig.from_dict({**SMALL, **over})


@pytest.fixture(scope="module")
def small_report():
    tracker = IndexTracker()
    return run_experiment(small_config(), tracker), tracker


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert len({derive_seed(0, i) for i in range(100)}) == 100
    assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)


def test_expand_grid():
    assert expand_grid({}) == [{}]
    assert expand_grid({"a": [1, 2], "b": [3]}) == [{"a": 1, "b": 3}, {"a": 2, "b": 3}]
    assert expand_grid([{"a": 1}]) == [{"a": 1}]


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"models": ["svm"]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"surprise": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"train_fraction": 1.5})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"interpret": {"colour": "red"}})
    cfg = small_config()
    assert ExperimentConfig.from_dict(cfg.to_dict()).config_hash() == cfg.config_hash()
    assert small_config(n_jobs=3, output_dir="elsewhere").config_hash() == cfg.config_hash()


def test_prepare_data_logs_size_variables():
    d = prepare_data(small_config())
    flagged = {f for f, on in zip(d.feature_names, d.transform_flags) if on}
    assert flagged == {"sales", "total_assets", "employees"}


def test_report_structure(small_report):
    report, _ = small_report
    assert list(report.results) == list(FAMILIES)
    for fam, res in report.results.items():
        m = res.metrics
        assert all(0.0 <= v <= 1.0 for v in (m.sensitivity, m.specificity, m.h_measure, m.auc))
        n_grid = len(expand_grid(small_config().grids[fam]))
        assert len(res.cv_trace) == n_grid * 2 and len(res.cv_mean_auc) == n_grid
    assert sum(len(v) for v in report.ale.values()) == 5 * len(FEATURES)
    assert set(report.shapley) == {"fann", "gbt"}
    doc = report.to_dict()
    assert [e["term"] for e in doc["models"]["lr"]["estimates"]] == ["(Intercept)", *FEATURES]
    assert "estimates" not in doc["models"]["gbt"]
    assert doc["provenance"]["config_hash"] == small_config().config_hash()


def test_no_test_row_reaches_tuning(small_report):
    report, tracker = small_report
    n, n_test = report.provenance["n"], report.provenance["n_test"]
    assert report.leakage["test_rows_seen_by_tuning"] == 0
    assert len(tracker.touched()) == n - n_test
    assert set(tracker.seen) == {"undersample", "validation"}


def test_leak_is_detected():
    cfg = small_config(models=["lr"])
    spy = IndexTracker()
    spy.record("validation", np.arange(3000))  # pretend every row was tuned on
    with pytest.raises(AssertionError, match="test rows"):
        run_experiment(cfg, spy)


def test_deterministic_across_runs_and_threads(small_report):
    report, _ = small_report
    again = run_experiment(small_config(n_jobs=2))
    a = strip_timestamps(report.to_dict())
    b = strip_timestamps(again.to_dict())
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_emit_outputs(small_report, tmp_path):
    report, _ = small_report
    manifest = emit_outputs(report, tmp_path)
    paths = {m["path"] for m in manifest}
    assert len(paths) == 2 + 5 * len(FEATURES) + 2 + 5
    assert {"report.json", "metrics.csv", "shapley/gbt.svg", "ale/gbt_profit_margin.svg", "models/gev.json"} <= paths
    import hashlib

    for m in manifest:
        assert hashlib.sha256((tmp_path / m["path"]).read_bytes()).hexdigest() == m["sha256"]
    rows = (tmp_path / "metrics.csv").read_text().splitlines()
    assert rows[0] == "model,sensitivity,specificity,h_measure,auc" and len(rows) == 6
    svg = (tmp_path / "ale" / "gbt_sales.svg").read_text()
    assert "antilog" in svg and svg.startswith("<svg")
    models = load_report_models(tmp_path)
    test_rows = prepare_data(small_config()).features[:10]
    np.testing.assert_array_equal(models["gbt"].predict_proba(test_rows), report.results["gbt"].model.predict_proba(test_rows))
    again = tmp_path / "again"
    assert emit_outputs(report, again) == manifest


def test_empty_model_set(tmp_path):
    report = run_experiment(small_config(models=[]))
    assert report.results == {} and report.ale == {}
    assert {m["path"] for m in emit_outputs(report, tmp_path)} == {"report.json", "metrics.csv"}


def test_csv_source_round_trip(tmp_path):
    assert cli.main(["synth", "--n", "2500", "--seed", "4", "--out", str(tmp_path / "firms.csv")]) == 0
    cfg = dict(SMALL, data={"csv": "firms.csv"}, models=["lr", "gbt"])
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    loaded = ExperimentConfig.from_json(tmp_path / "cfg.json")
    assert loaded.data == DataSource(csv=str(tmp_path / "firms.csv"))
    report = run_experiment(loaded)
    assert report.provenance["n"] == load_csv(tmp_path / "firms.csv").dataset.n == 2500


# ----------------------------------------------------------------------- CLI


def test_cli_run_and_explain(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps(SMALL))
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(tmp_path / "cfg.json"), "--out", str(out), "--models", "gbt,lr"]) == 0
    assert "gbt" in capsys.readouterr().out
    assert json.loads((out / "report.json").read_text())["config"]["models"] == ["gbt", "lr"]
    assert cli.main(["synth", "--n", "500", "--out", str(tmp_path / "f.csv")]) == 0
    code = cli.main(["explain", "--model", str(out / "models" / "gbt.json"), "--data", str(tmp_path / "f.csv"),
                     "--feature", "sales", "--bins", "8", "--bootstrap", "5", "--out", str(tmp_path / "c.json"),
                     "--svg", str(tmp_path / "c.svg")])
    assert code == 0
    curve = json.loads((tmp_path / "c.json").read_text())
    assert curve["feature"] == "sales" and curve["log_scale"] and curve["dropped_rows"] == 0
    assert (tmp_path / "c.svg").read_text().startswith("<svg")
    assert load_model(out / "models" / "gbt.json").family == "gbt"


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as info:
        cli.main(["run", "--bogus"])
    assert info.value.code == 1
    (tmp_path / "csv.json").write_text(json.dumps({"data": {"csv": "nowhere.csv"}}))
    assert cli.main(["run", "--config", str(tmp_path / "csv.json"), "--out", str(tmp_path / "o")]) == 2
    diverge = dict(SMALL, models=["fann"], grids={"fann": {"learning_rate": [1e308]}})
    (tmp_path / "bad.json").write_text(json.dumps(diverge))
    with np.errstate(all="ignore"):
        assert cli.main(["run", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "b")]) == 3
    err = capsys.readouterr().err
    assert "fann" in err
    assert cli.main(["explain", "--model", str(tmp_path / "none.json"), "--data", "x.csv", "--feature", "a"]) in (1, 2)


def test_interpret_settings_defaults():
    s = InterpretSettings()
    assert s.bins == 40 and s.bootstrap == 100 and s.band == (0.05, 0.95)
