from __future__ import annotations

import csv
import json

import numpy as np
import pytest
import yaml
from scipy import stats

from lrsaw import harness, montecarlo
from lrsaw.harness import ExperimentConfig, run_pipeline, theorem_table
from lrsaw.stepdist import build_step_distribution

SMALL = {
    "model": {"d": 5, "alpha": 1.5, "L": 1, "R": 1},
    "enumeration": {"max_n": 4},
    "mc": {"n_list": [8, 16, 32], "count": 400, "method": "rosenbluth", "seed": 3},
    "cf_grid": [[0, 0, 0, 0, 0], [0.5, 0, 0, 0, 0]],
    "times": [{"t": [1.0], "k": [[0.5, 0, 0, 0, 0]]}, {"t": [0.5, 1.0], "k": [[0.5, 0, 0, 0, 0]] * 2}],
    "stable_samples": 2000,
}


def _cfg(tmp_path, name="out", **over):
    raw = json.loads(json.dumps(SMALL))
    raw.update(over)
    raw["output_dir"] = str(tmp_path / name)
    return ExperimentConfig.from_dict(raw)


def _read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    cfg = _cfg(tmp)
    return cfg, run_pipeline(cfg)


def test_minimal_config_has_no_mc(tmp_path):
    cfg = ExperimentConfig.from_dict(
        {"model": {"d": 1, "alpha": 1.5, "L": 1, "R": 1}, "enumeration": {"max_n": 3}, "output_dir": str(tmp_path)}
    )
    rep = run_pipeline(cfg)
    assert set(rep.tables) == {"series", "enumeration"}
    assert rep.verdicts == []
    assert "zc" not in rep.constants
    rows = _read(tmp_path / "series.csv")
    assert [float(r["c_n"]) for r in rows] == [1.0, 1.0, 0.5, 0.25]


def test_report_is_reproducible(tmp_path, small_run):
    cfg, rep = small_run
    again = run_pipeline(_cfg(tmp_path, "again"))
    assert again.body_json() == rep.body_json()
    doc = json.loads((tmp_path / "again" / "report.json").read_text())
    assert doc["schema"] == 1 and doc["body"]["schema"] == 1
    assert "generated_at" not in doc["body"]


def test_report_contents(small_run):
    cfg, rep = small_run
    assert {"zc", "v_alpha", "K_alpha", "Xi", "truncated_mass", "R"} <= set(rep.constants)
    assert rep.provenance["config_sha256"] == cfg.digest()
    assert rep.provenance["seed"] == 3
    # defaults are explicit in the emitted config
    assert rep.config["mc"]["streams"] == montecarlo.DEFAULT_STREAMS
    assert rep.config["enumeration"]["resolved"] is None
    names = [v["check"] for v in rep.verdicts]
    assert len(names) == len(set(names))
    for v in rep.verdicts:
        assert v["status"] in ("pass", "fail")
        assert v["table"] in rep.tables and v["rows"]


def test_every_verdict_row_exists(small_run):
    cfg, rep = small_run
    out = cfg.output_dir
    for v in rep.verdicts:
        rows = _read(f"{out}/{rep.tables[v['table']]}")
        assert max(v["rows"]) < len(rows)


def test_out_of_regime_is_informational(tmp_path):
    cfg = _cfg(tmp_path, model={"d": 2, "alpha": 1.5, "L": 1, "R": 1}, cf_grid=[[0.5, 0.0]],
               times=[{"t": [1.0], "k": [[0.5, 0.0]]}], stable_samples=0)
    assert cfg.out_of_regime
    rep = run_pipeline(cfg)
    for v in rep.verdicts:
        if v["check"] != "series_stability":
            assert v["status"] == "informational"


def test_regime_gate():
    assert ExperimentConfig.from_dict({"model": {"d": 5, "alpha": 1.5, "L": 1, "R": 1}}).out_of_regime is False
    assert ExperimentConfig.from_dict({"model": {"d": 4, "alpha": 3.0, "L": 1, "R": 1}}).out_of_regime is True


def test_endpoint_k0_row(small_run):
    cfg, rep = small_run
    rows = _read(f"{cfg.output_dir}/endpoint.csv")
    for r in rows:
        if r["k"].split() == ["0.0"] * 5:
            assert float(r["empirical"]) == 1.0 and float(r["target"]) == 1.0 and float(r["z"]) == 0.0


def test_findim_single_time_equals_endpoint(small_run):
    cfg, rep = small_run
    end = {(r["n"], r["k"]): r for r in _read(f"{cfg.output_dir}/endpoint.csv")}
    for r in _read(f"{cfg.output_dir}/findim.csv"):
        if r["t_spec"] == "1.0":
            e = end[(r["n"], r["k_spec"])]
            for col in ("empirical", "target", "stderr", "z"):
                assert r[col] == e[col]


def test_mean_r_slope_matches_external_regression(small_run):
    cfg, _ = small_run
    rows = _read(f"{cfg.output_dir}/mean_r.csv")
    n = np.array([float(r["n"]) for r in rows])
    xi = np.array([float(r["xi_r"]) for r in rows])
    ref = stats.linregress(np.log(n), np.log(xi)).slope
    for r in rows:
        assert float(r["slope"]) == pytest.approx(ref, rel=1e-10)


def test_theorem_table_missing_inputs():
    with pytest.raises(ValueError):
        theorem_table("endpoint", batches={})
    with pytest.raises(ValueError):
        theorem_table("volume")


def test_theorem_table_direct():
    dist = build_step_distribution(2, 1.5, 1, 1)
    batches = {n: montecarlo.sample_rejection(dist, n, 300, n) for n in (4, 8)}
    ctxs = {n: montecarlo.ScalingContext(2, 1.5, 1.0, 1.0, n) for n in (4, 8)}
    header, rows = theorem_table("endpoint", batches=batches, contexts=ctxs, cf_grid=[[0.0, 0.0], [1.0, 0.0]])
    assert header[-4:] == ["empirical", "target", "stderr", "z"] and len(rows) == 4
    header, rows = theorem_table("findim", batches=batches, contexts=ctxs,
                                 specs=[((0.5, 1.0), (np.ones(2), np.ones(2)))])
    assert "t_spec" in header and len(rows) == 2


def test_yaml_roundtrip(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    cfg = ExperimentConfig.load(path)
    assert cfg.mc.n_list == [8, 16, 32] and cfg.model.alpha == 1.5
    assert cfg.digest() == ExperimentConfig.from_dict(json.loads(json.dumps(SMALL))).digest()


def test_invalid_configs():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"model": {"d": 2, "alpha": 1.5, "L": 3, "R": 2}})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"model": {"d": 2, "alpha": 1.5, "L": 1, "R": 2}, "cf_grid": [[1.0]]})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(
            {"model": {"d": 2, "alpha": 1.5, "L": 1, "R": 2}, "mc": {"method": "metropolis"}}
        )
    with pytest.raises(TypeError):
        ExperimentConfig.from_dict({"model": {"d": 2, "alpha": 1.5, "L": 1, "R": 2}, "colour": "red"})
