import csv
import json
import random

import numpy as np
import pytest

from metades.harness import (
    DES_NAMES, DatasetSpec, ExperimentConfig, ExperimentError, ExperimentReport, aggregate,
    derive_seed, emit_report, read_summary, run_experiment, run_replication, run_replication_set,
)


def small_cfg(tmp_path=None, **kw):
    base = dict(
        datasets=(DatasetSpec("banana", generator="banana", n=240),
                  DatasetSpec("lithuanian", generator="lithuanian", n=240)),
        replications=2, out=str(tmp_path / "out") if tmp_path else "out",
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_defaults():
    cfg = ExperimentConfig()
    assert (cfg.K, cfg.Kp, cfg.h_C, cfg.M, cfg.replications) == (7, 5, 0.70, 10, 20)


def test_config_roundtrip(tmp_path):
    cfg = small_cfg(tmp_path)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_json(path) == cfg


def test_config_validation():
    with pytest.raises(ExperimentError):
        small_cfg(scenarios=("sideways",))
    with pytest.raises(ExperimentError):
        small_cfg(datasets=(DatasetSpec("a", generator="banana"), DatasetSpec("a", generator="banana")))
    with pytest.raises(ExperimentError):
        small_cfg(empty_meta="ignore")


def test_derive_seed():
    assert derive_seed(0, "banana", 3) == derive_seed(0, "banana", 3)
    seeds = {derive_seed(b, n, r) for b in (0, 1) for n in ("a", "b") for r in range(5)}
    assert len(seeds) == 20


def test_run_replication_deterministic_and_bounded():
    cfg = small_cfg(scenarios=("dependent",))
    ds = cfg.datasets[0].load()
    a, b = run_replication(cfg, ds, 0), run_replication(cfg, ds, 0)
    assert a.accuracy == b.accuracy and a.meta_accuracy == b.meta_accuracy
    assert set(a.accuracy) == set(cfg.techniques)
    for v in a.accuracy.values():
        assert 0.0 <= v <= 1.0
        # balanced binary data: nothing falls far below the class prior
        assert v >= 0.5 - 0.15


def test_replication_set_scenarios():
    cfg = small_cfg()
    res = run_replication_set(cfg, [d.load() for d in cfg.datasets], 0)
    for r in res:
        assert set(r.meta_accuracy) == {"dependent", "independent", "all"}
        assert {"DES_D", "DES_I", "DES_ALL"} <= set(r.accuracy)


def test_independent_needs_two_datasets():
    cfg = small_cfg(datasets=(DatasetSpec("banana", generator="banana", n=240),), scenarios=("independent",))
    with pytest.raises(ExperimentError):
        run_experiment(cfg, write=False)


def test_empty_meta_policies(tmp_path):
    cfg = small_cfg(tmp_path, h_C=0.0, scenarios=("dependent",), replications=1)
    with pytest.raises(ExperimentError, match="replication 0"):
        run_experiment(cfg, write=False)
    rep = run_experiment(ExperimentConfig(**{**cfg.__dict__, "empty_meta": "fallback"}), write=False)
    for d in rep.datasets:
        assert rep.fallback_rate[d, "DES_D"] == [1.0]
        assert rep.accuracy[d, "DES_D"] == rep.accuracy[d, "STATIC"]
        assert np.isnan(rep.meta_accuracy[d, "dependent"][0])


class TestReport:
    def test_single_replication_std_zero(self, tmp_path):
        rep = run_experiment(small_cfg(tmp_path, replications=1, scenarios=("dependent",)), write=False)
        assert all(s == 0.0 for _, _, _, s, _ in rep.summary_rows())

    def test_mean_std(self):
        assert ExperimentReport.mean_std([0.7, 0.8])[0] == pytest.approx(0.75)

    def test_rows_and_files(self, tmp_path):
        cfg = small_cfg(tmp_path)
        rep = run_experiment(cfg)
        out = tmp_path / "out"
        assert len(list(rep.summary_rows())) == len(rep.datasets) * len(rep.techniques)
        parsed = read_summary(out / "summary.csv")
        for d, t, m, s, _ in rep.summary_rows():
            assert parsed[d, t][0] == pytest.approx(m, abs=1e-12)
            assert parsed[d, t][1] == pytest.approx(s, abs=1e-12)
        with (out / "correlation.csv").open() as fh:
            assert len(list(csv.DictReader(fh))) == len(rep.datasets)
        for name in ("meta_summary.csv", "correlation_summary.csv", "significance.csv",
                     "replications.csv", "config.json"):
            assert (out / name).exists()
        assert json.loads((out / "config.json").read_text()) == json.loads(json.dumps(cfg.to_dict()))
        assert not (out / "trace.csv").exists()

    def test_correlations_in_range(self, tmp_path):
        rep = run_experiment(small_cfg(tmp_path), write=False)
        for sc, rho in rep.correlations().items():
            assert np.isnan(rho) or -1.0 <= rho <= 1.0

    def test_significance_rows(self, tmp_path):
        rep = run_experiment(small_cfg(tmp_path), write=False)
        rows = list(rep.significance_rows())
        T = len(rep.techniques)
        assert len(rows) == len(rep.datasets) * T * (T - 1) // 2
        for _, _, _, H, p, sig in rows:
            assert H >= 0 and 0 <= p <= 1 and sig == (p < 0.05)

    def test_trace(self, tmp_path):
        cfg = small_cfg(tmp_path, trace=True, replications=1, scenarios=("dependent",))
        run_experiment(cfg)
        with (tmp_path / "out" / "trace.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert set(rows[0]) == {"dataset", "replication", "query", "technique", "selected", "fallback", "label"}
        des = [r for r in rows if r["technique"] == "DES_D"]
        assert len(des) == 2 * 60   # two datasets, a quarter of 240 samples each

    def test_empty_report(self, tmp_path):
        cfg = small_cfg(tmp_path)
        empty = ExperimentReport(cfg, [], [], [], {}, {}, {})
        with pytest.raises(ExperimentError):
            emit_report(empty, tmp_path / "x")

    def test_replication_order_irrelevant(self, tmp_path):
        cfg = small_cfg(tmp_path, replications=3)
        datasets = [d.load() for d in cfg.datasets]
        results = [r for rep in range(3) for r in run_replication_set(cfg, datasets, rep)]
        shuffled = results[:]
        random.Random(0).shuffle(shuffled)
        emit_report(aggregate(cfg, results), tmp_path / "a")
        emit_report(aggregate(cfg, shuffled), tmp_path / "b")
        for f in (tmp_path / "a").iterdir():
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_byte_identical_reruns(self, tmp_path):
        a = small_cfg(tmp_path, out=str(tmp_path / "a"))
        b = small_cfg(tmp_path, out=str(tmp_path / "b"))
        run_experiment(a)
        run_experiment(b)
        for f in (tmp_path / "a").glob("*.csv"):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_csv_dataset(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(80, 3))
    y = (X[:, 0] + 0.3 * rng.normal(size=80) > 0).astype(int)
    path = tmp_path / "toy.csv"
    np.savetxt(path, np.column_stack([X, y]), delimiter=",")
    spec = DatasetSpec.parse(str(path))
    assert spec.name == "toy" and spec.csv == str(path)
    ds = spec.load()
    assert len(ds) == 80 and ds.name == "toy"


def test_des_names():
    assert DES_NAMES == {"dependent": "DES_D", "independent": "DES_I", "all": "DES_ALL"}
