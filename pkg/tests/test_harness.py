import json
import warnings

import numpy as np
import pytest

from possrobust.cli import EXIT_CONFIG, EXIT_DATA, main
from possrobust.harness import (
    ConfigError,
    DataError,
    format_trace,
    load_series,
    make_rng,
    parse_config,
    run_experiment,
)


def test_defaults_and_round_trip():
    cfg = parse_config({"experiment": "feature"})
    assert cfg.params["d"] == 10 and cfg.params["tau"] == 0.25
    assert parse_config(cfg.to_dict()) == cfg
    assert parse_config(json.dumps(cfg.to_dict())) == cfg


@pytest.mark.parametrize("raw", [
    {"experiment": "nope"},
    {"experiment": "feature", "bogus": 1},
    {"experiment": "feature", "params": {"dd": 3}},
    {"experiment": "feature", "params": {"eps": 2.0}},
    {"experiment": "kalman", "methods": ["threshold"]},
    {"experiment": "kalman", "methods": ["median"]},
    {"experiment": "feature", "repeats": 0},
    {"experiment": "feature", "sweep": {"param": "zz", "values": [1]}},
    {"experiment": "kalman", "data": "x.csv"},
])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_tau_with_discount_warns():
    with pytest.warns(UserWarning):
        parse_config({"experiment": "feature", "methods": "discount", "params": {"tau": 0.5}})
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        parse_config({"experiment": "feature", "methods": "discount"})


def test_load_series(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("value\n1.5\n\n2,extra\n3e2\n")
    assert load_series(p).tolist() == [1.5, 2.0, 300.0]
    p.write_text("1\n2\nx\n")
    with pytest.raises(DataError, match=":3:"):
        load_series(p)
    with pytest.raises(DataError):
        load_series(tmp_path / "missing.csv")


def test_substreams_are_independent_of_order():
    a = make_rng(5, 0, 3).random(4)
    make_rng(5, 0, 2).random(100)
    assert np.array_equal(a, make_rng(5, 0, 3).random(4))
    assert not np.array_equal(a, make_rng(5, 0, 4).random(4))


def test_sweep_summary():
    cfg = parse_config({"experiment": "known-precision", "repeats": 4, "params": {"T": 30},
                        "sweep": {"param": "eps", "values": [0.0, 0.2]}})
    trace, summary = run_experiment(cfg)
    assert [s["value"] for s in summary["results"]] == [0.0, 0.2]
    assert summary["results"][0]["methods"]["median"]["mu_error"]["rms"] > 0
    text = format_trace(cfg, trace)
    assert text.splitlines()[0].startswith("sweep_value,repeat,method,t,mu")


def test_changepoint_with_data(tmp_path):
    y = np.concatenate([np.zeros(80), np.full(80, 10.0)]) + np.random.default_rng(0).normal(0, 1, 160)
    p = tmp_path / "series.csv"
    p.write_text("depth\n" + "\n".join(f"{float(v)!r}" for v in y))
    cfg = parse_config({"experiment": "changepoint", "data": str(p), "params": {"sigma": 1.0},
                        "methods": ["discount"]})
    trace, summary = run_experiment(cfg)
    assert summary["results"][0]["methods"]["discount"]["n_changepoints"]["mean"] == 1
    assert len(trace) == 160


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["feature", "--set", "zzz=1", "--output", str(tmp_path / "a")]) == EXIT_CONFIG
    bad = tmp_path / "bad.csv"
    bad.write_text("1\nfoo\n")
    assert main(["changepoint", "--data", str(bad), "--output", str(tmp_path / "b")]) == EXIT_DATA
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text("{not json")
    assert main(["kalman", "--config", str(cfgfile)]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["unknown-experiment"])
    assert exc.value.code == 2


def test_cli_writes_outputs(tmp_path):
    out = tmp_path / "run"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "soft-uniform", "params": {"T": 20}, "repeats": 3}))
    assert main(["soft-uniform", "--config", str(cfg), "--seed", "9", "--output", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 9 and summary["repeats"] == 3
    resolved = json.loads((out / "config.json").read_text())
    assert parse_config(resolved).params["T"] == 20
    assert (out / "plotdata.csv").read_text().startswith("sweep_value,method,metric,statistic,value")
