"""Replication harness: splits, pools, meta-classifiers per scenario, every
selection technique, aggregation and report files."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .competence import EmptyMetaDataError, MetaDataset, build_meta_dataset
from .data import Dataset, gen_banana, gen_lithuanian, load_csv, standardize_split, stratified_split
from .des import BASELINES, QueryBatch, SelectionResult, build_dsel_index
from .meta import MetaClassifier, MetaTrainConfig, MetaTrainingError, meta_accuracy, split_meta, train_meta
from .pool import PerceptronConfig, bagging_pool
from .stats import kruskal_wallis, pearson

log = logging.getLogger(__name__)

SCENARIOS = ("dependent", "independent", "all")
DES_NAMES = {"dependent": "DES_D", "independent": "DES_I", "all": "DES_ALL"}
BASELINE_NAMES = tuple(BASELINES)
SIGNIFICANCE_LEVEL = 0.05


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    """Either a CSV file or one of the built-in generators."""

    name: str
    csv: str | None = None
    label_column: int = -1
    header: bool = False
    generator: str | None = None
    n: int = 1000
    noise: float | None = None
    seed: int = 1

    def load(self) -> Dataset:
        if self.csv:
            ds = load_csv(self.csv, self.label_column, self.header, self.name)
        elif self.generator == "banana":
            kw = {} if self.noise is None else {"noise": self.noise}
            ds = gen_banana(self.n, seed=self.seed, **kw)
        elif self.generator == "lithuanian":
            kw = {} if self.noise is None else {"noise": self.noise}
            ds = gen_lithuanian(self.n, seed=self.seed, **kw)
        else:
            raise ExperimentError(f"dataset {self.name!r}: give either a csv path or a known generator")
        return Dataset(ds.X, ds.y, ds.num_classes, self.name)

    @classmethod
    def parse(cls, text: str, header: bool = False) -> "DatasetSpec":
        """``banana`` / ``lithuanian`` select a generator, anything else is a CSV path."""
        if text in ("banana", "lithuanian"):
            return cls(name=text, generator=text)
        return cls(name=Path(text).stem, csv=text, header=header)


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple = ()
    K: int = 7
    Kp: int = 5
    h_C: float = 0.70
    M: int = 10
    replications: int = 20
    scenarios: tuple = SCENARIOS
    seed: int = 0
    out: str = "results"
    trace: bool = False
    # "error": a replication whose selector cannot be trained aborts the run;
    # "fallback": that replication's DES uses the full pool instead
    empty_meta: str = "error"
    perceptron: PerceptronConfig = field(default_factory=PerceptronConfig)
    meta: MetaTrainConfig = field(default_factory=MetaTrainConfig)

    def __post_init__(self):
        object.__setattr__(self, "datasets", tuple(
            d if isinstance(d, DatasetSpec) else DatasetSpec(**d) for d in self.datasets))
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        if isinstance(self.perceptron, dict):
            object.__setattr__(self, "perceptron", PerceptronConfig(**self.perceptron))
        if isinstance(self.meta, dict):
            object.__setattr__(self, "meta", MetaTrainConfig(**self.meta))
        if self.empty_meta not in ("error", "fallback"):
            raise ExperimentError("empty_meta must be 'error' or 'fallback'")
        bad = set(self.scenarios) - set(SCENARIOS)
        if bad:
            raise ExperimentError(f"unknown scenarios {sorted(bad)}")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ExperimentError("dataset names must be unique")
        if self.replications < 1 or self.M < 1 or self.K < 1 or self.Kp < 1:
            raise ExperimentError("replications, M, K and K_p must be >= 1")

    @property
    def techniques(self) -> tuple:
        des = tuple(DES_NAMES[s] for s in SCENARIOS if s in self.scenarios)
        return des + BASELINE_NAMES

    def to_dict(self) -> dict:
        d = asdict(self)
        d["datasets"] = [asdict(s) for s in self.datasets]
        d["scenarios"] = list(self.scenarios)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def derive_seed(base: int, name: str, rep: int) -> int:
    """Seed for one (dataset, replication), stable under adding datasets."""
    digest = hashlib.sha256(f"{base}:{name}:{rep}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class ReplicationResult:
    dataset: str
    rep: int
    accuracy: dict = field(default_factory=dict)        # technique -> test accuracy
    meta_accuracy: dict = field(default_factory=dict)   # scenario -> lambda accuracy on validation rows
    meta_accuracy_gen: dict = field(default_factory=dict)  # scenario -> lambda accuracy on G
    fallback_rate: dict = field(default_factory=dict)   # technique -> fraction of queries
    seconds: float = 0.0
    trace: list = field(default_factory=list)


@dataclass
class _Prepared:
    """Everything one (dataset, replication) needs before scenarios are applied.

    ``md`` and ``lam`` are ``None`` when no selector could be trained and the
    config allows falling back to the full pool.
    """

    name: str
    md: MetaDataset | None
    meta_split: tuple | None
    lam: MetaClassifier | None
    idx: object
    batch: QueryBatch
    md_gen: MetaDataset
    seconds: float

    @property
    def md_val(self) -> MetaDataset | None:
        return None if self.md is None else self.md.subset(self.meta_split[1])


def _prepare(cfg: ExperimentConfig, ds: Dataset, rep: int) -> _Prepared:
    t0 = time.perf_counter()
    s_split, s_pool, s_meta, s_lambda = np.random.SeedSequence(derive_seed(cfg.seed, ds.name, rep)).generate_state(4)
    split = standardize_split(stratified_split(ds, int(s_split)))
    pool = bagging_pool(split.train, cfg.M, cfg.perceptron, int(s_pool))
    idx = build_dsel_index(pool, split.dsel)
    batch = QueryBatch.build(pool, idx, split.test, cfg.K, cfg.Kp)
    try:
        md = build_meta_dataset(pool, split.meta_train, cfg.K, cfg.Kp, cfg.h_C)
        meta_split = split_meta(md, cfg.meta.val_fraction, int(s_meta))
        lam = train_meta(md, _with_seed(cfg.meta, int(s_lambda)), split=meta_split)
    except (EmptyMetaDataError, MetaTrainingError) as exc:
        if cfg.empty_meta != "fallback":
            raise
        log.warning("%s replication %d: no selector (%s); DES falls back to the full pool", ds.name, rep, exc)
        md = meta_split = lam = None
    md_gen = batch.meta_dataset(cfg.K, cfg.Kp, f"{ds.name}/test")
    return _Prepared(ds.name, md, meta_split, lam, idx, batch, md_gen, time.perf_counter() - t0)


def _with_seed(mc: MetaTrainConfig, seed: int) -> MetaTrainConfig:
    return MetaTrainConfig(mc.max_epochs, mc.learning_rate, mc.patience, mc.val_fraction, mc.batch_size, seed)


def _run_des(p: _Prepared, lam: MetaClassifier | None) -> list[SelectionResult]:
    if lam is None:
        return [SelectionResult(r.selected, True, r.label) for r in p.batch.run("STATIC", p.idx)]
    return p.batch.run("DES", p.idx, lam)


def _lambda_accuracy(lam: MetaClassifier | None, p: _Prepared):
    """Selector accuracy on the validation rows of the target's meta-training
    data and on every (query, member) pair of G (``nan`` if the selector or
    the rows are missing)."""
    val = float("nan") if lam is None or p.md is None else meta_accuracy(lam, p.md_val)
    gen = float("nan") if lam is None else meta_accuracy(lam, p.md_gen)
    return val, gen


def _nanmean(values) -> float:
    v = np.asarray(values, dtype=float)
    return float("nan") if np.all(np.isnan(v)) else float(np.nanmean(v))


def _set_lambda(res: ReplicationResult, scenario: str, accs):
    vals, gens = zip(*accs)
    res.meta_accuracy[scenario] = _nanmean(vals)
    res.meta_accuracy_gen[scenario] = _nanmean(gens)


def _record(res: ReplicationResult, technique: str, p: _Prepared, results, trace: bool):
    res.accuracy[technique] = p.batch.accuracy(results)
    res.fallback_rate[technique] = float(np.mean([r.fallback_used for r in results]))
    if trace:
        res.trace.extend(
            (p.name, res.rep, j, technique, " ".join(map(str, r.selected)), int(r.fallback_used), r.label)
            for j, r in enumerate(results))


def _baselines(cfg: ExperimentConfig, p: _Prepared, res: ReplicationResult):
    for name in BASELINE_NAMES:
        _record(res, name, p, p.batch.run(name, p.idx), cfg.trace)


def _context(name: str, rep: int, fn, *args):
    try:
        return fn(*args)
    except (ValueError, RuntimeError) as exc:
        raise ExperimentError(f"dataset {name!r}, replication {rep}: {exc}") from exc


def run_replication(cfg: ExperimentConfig, dataset: Dataset, rep_index: int) -> ReplicationResult:
    """One replication on a single dataset: DES_D plus every baseline."""
    p = _context(dataset.name, rep_index, _prepare, cfg, dataset, rep_index)
    res = ReplicationResult(dataset.name, rep_index, seconds=p.seconds)
    _record(res, DES_NAMES["dependent"], p, _run_des(p, p.lam), cfg.trace)
    _set_lambda(res, "dependent", [_lambda_accuracy(p.lam, p)])
    _baselines(cfg, p, res)
    return res


def run_replication_set(cfg: ExperimentConfig, datasets: Sequence[Dataset], rep_index: int) -> list[ReplicationResult]:
    """One replication across all datasets, which the cross-dataset
    scenarios need together.

    Independent: every other dataset's selector is applied to the target in
    turn and the target's accuracies are averaged over those sources.
    All: one selector trained on the union of every dataset's meta-training
    rows, validated on the union of their validation rows.
    """
    prepared = [_context(ds.name, rep_index, _prepare, cfg, ds, rep_index) for ds in datasets]
    results = [ReplicationResult(p.name, rep_index, seconds=p.seconds) for p in prepared]

    lam_all = None
    if "all" in cfg.scenarios:
        t0 = time.perf_counter()
        lam_all = _context("all", rep_index, _train_all, cfg, prepared, rep_index)
        share = (time.perf_counter() - t0) / len(prepared)
        for res in results:
            res.seconds += share

    for p, res in zip(prepared, results):
        t0 = time.perf_counter()
        if "dependent" in cfg.scenarios:
            _record(res, "DES_D", p, _run_des(p, p.lam), cfg.trace)
            _set_lambda(res, "dependent", [_lambda_accuracy(p.lam, p)])
        if "independent" in cfg.scenarios:
            sources = [q for q in prepared if q is not p]
            if not sources:
                raise ExperimentError("the independent scenario needs at least two datasets")
            sources = [q for q in sources if q.lam is not None] or [None]
            accs, fbs, lams = [], [], []
            for q in sources:
                lam = None if q is None else q.lam
                out = _run_des(p, lam)
                accs.append(p.batch.accuracy(out))
                fbs.append(np.mean([r.fallback_used for r in out]))
                lams.append(_lambda_accuracy(lam, p))
            res.accuracy["DES_I"] = float(np.mean(accs))
            res.fallback_rate["DES_I"] = float(np.mean(fbs))
            _set_lambda(res, "independent", lams)
        if "all" in cfg.scenarios:
            _record(res, "DES_ALL", p, _run_des(p, lam_all), cfg.trace)
            _set_lambda(res, "all", [_lambda_accuracy(lam_all, p)])
        _baselines(cfg, p, res)
        res.seconds += time.perf_counter() - t0
    return results


def _train_all(cfg: ExperimentConfig, prepared: Sequence[_Prepared], rep: int) -> MetaClassifier | None:
    usable = [p for p in prepared if p.md is not None]
    if not usable:
        if cfg.empty_meta == "fallback":
            return None
        raise ExperimentError("no dataset produced meta-training data")
    md = MetaDataset.concat([p.md for p in usable], provenance="all")
    offsets = np.cumsum([0] + [len(p.md) for p in usable])
    tr = np.concatenate([p.meta_split[0] + o for p, o in zip(usable, offsets)])
    va = np.concatenate([p.meta_split[1] + o for p, o in zip(usable, offsets)])
    seed = int(np.random.SeedSequence(derive_seed(cfg.seed, "__all__", rep)).generate_state(1)[0])
    return train_meta(md, _with_seed(cfg.meta, seed), split=(tr, va))


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    datasets: list
    techniques: list
    scenarios: list
    accuracy: dict        # (dataset, technique) -> per-replication values, rep order
    meta_accuracy: dict   # (dataset, scenario) -> per-replication values, validation rows
    fallback_rate: dict
    trace: list = field(default_factory=list)
    meta_accuracy_gen: dict = field(default_factory=dict)  # same keys, measured on G

    @staticmethod
    def mean_std(values) -> tuple[float, float]:
        """Mean and population std over the replications that have a value."""
        v = np.asarray(values, dtype=float)
        v = v[~np.isnan(v)]
        if v.size == 0:
            return float("nan"), float("nan")
        return float(v.mean()), float(v.std())

    def summary_rows(self):
        for d in self.datasets:
            for t in self.techniques:
                m, s = self.mean_std(self.accuracy[d, t])
                yield d, t, m, s, len(self.accuracy[d, t])

    def meta_rows(self):
        """(dataset, scenario, mean, std, replications with a selector,
        mean on G, std on G)."""
        for d in self.datasets:
            for sc in self.scenarios:
                vals = self.meta_accuracy[d, sc]
                m, s = self.mean_std(vals)
                gm, gs = self.mean_std(self.meta_accuracy_gen.get((d, sc), [float("nan")]))
                yield d, sc, m, s, int(np.sum(~np.isnan(vals))), gm, gs

    def significance_rows(self):
        """Kruskal-Wallis between every pair of techniques, per dataset."""
        for d in self.datasets:
            for i, a in enumerate(self.techniques):
                for b in self.techniques[i + 1:]:
                    H, p = kruskal_wallis([self.accuracy[d, a], self.accuracy[d, b]])
                    yield d, a, b, H, p, p < SIGNIFICANCE_LEVEL

    def correlation_table(self) -> dict:
        """scenario -> (per-dataset DES means, per-dataset lambda means)."""
        table = {}
        for sc in self.scenarios:
            des = [self.mean_std(self.accuracy[d, DES_NAMES[sc]])[0] for d in self.datasets]
            lam = [self.mean_std(self.meta_accuracy[d, sc])[0] for d in self.datasets]
            table[sc] = (des, lam)
        return table

    def correlations(self) -> dict:
        """Pearson rho between DES accuracy and lambda accuracy across datasets;
        ``nan`` when fewer than two datasets or a constant column."""
        out = {}
        for sc, (des, lam) in self.correlation_table().items():
            try:
                out[sc] = pearson(des, lam)
            except ValueError:
                out[sc] = float("nan")
        return out


def aggregate(cfg: ExperimentConfig, results: Sequence[ReplicationResult]) -> ExperimentReport:
    if not results:
        raise ExperimentError("no replication results to aggregate")
    ordered = sorted(results, key=lambda r: (r.dataset, r.rep))
    datasets = list(dict.fromkeys(d.name for d in cfg.datasets)) or sorted({r.dataset for r in ordered})
    datasets = [d for d in datasets if any(r.dataset == d for r in ordered)]
    techniques = [t for t in cfg.techniques if all(t in r.accuracy for r in ordered)]
    scenarios = [s for s in SCENARIOS if s in cfg.scenarios and all(s in r.meta_accuracy for r in ordered)]
    acc, lam, lam_gen, fb = {}, {}, {}, {}
    for d in datasets:
        rows = [r for r in ordered if r.dataset == d]
        for t in techniques:
            acc[d, t] = [r.accuracy[t] for r in rows]
            fb[d, t] = [r.fallback_rate[t] for r in rows]
        for sc in scenarios:
            lam[d, sc] = [r.meta_accuracy[sc] for r in rows]
            lam_gen[d, sc] = [r.meta_accuracy_gen.get(sc, float("nan")) for r in rows]
    trace = [row for r in ordered for row in r.trace]
    return ExperimentReport(cfg, datasets, techniques, scenarios, acc, lam, fb, trace, lam_gen)


def run_experiment(cfg: ExperimentConfig, progress: Callable[[str], None] | None = None,
                   write: bool = True) -> ExperimentReport:
    """Run every replication, aggregate, and (by default) write the report."""
    if not cfg.datasets:
        raise ExperimentError("no datasets configured")
    datasets = [spec.load() for spec in cfg.datasets]
    results: list[ReplicationResult] = []
    for rep in range(cfg.replications):
        if set(cfg.scenarios) <= {"dependent"}:
            batch = [run_replication(cfg, ds, rep) for ds in datasets]
        else:
            batch = run_replication_set(cfg, datasets, rep)
        results.extend(batch)
        if progress:
            progress(f"replication {rep + 1}/{cfg.replications} done")
    report = aggregate(cfg, results)
    if write:
        emit_report(report, cfg.out)
    return report


def _f(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit_report(report: ExperimentReport, out_dir) -> list[Path]:
    """Write the report tables; returns the paths written.

    Accuracies are fractions in [0, 1] written with full float precision.
    """
    if not report.datasets or not report.techniques:
        raise ExperimentError("refusing to write an empty report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name, header, rows):
        path = out / name
        _write_csv(path, header, rows)
        written.append(path)

    emit("summary.csv", ["dataset", "technique", "mean", "std", "replications"],
         [(d, t, _f(m), _f(s), n) for d, t, m, s, n in report.summary_rows()])
    emit("meta_summary.csv", ["dataset", "scenario", "mean", "std", "replications", "gen_mean", "gen_std"],
         [(d, sc, _f(m), _f(s), n, _f(gm), _f(gs)) for d, sc, m, s, n, gm, gs in report.meta_rows()])

    table = report.correlation_table()
    header = ["dataset"]
    for sc in report.scenarios:
        header += [f"des_{sc}", f"lambda_{sc}"]
    rows = []
    for i, d in enumerate(report.datasets):
        row = [d]
        for sc in report.scenarios:
            row += [_f(table[sc][0][i]), _f(table[sc][1][i])]
        rows.append(row)
    emit("correlation.csv", header, rows)
    emit("correlation_summary.csv", ["scenario", "pearson_rho", "datasets"],
         [(sc, _f(r), len(report.datasets)) for sc, r in report.correlations().items()])
    emit("significance.csv", ["dataset", "technique_a", "technique_b", "H", "p_value", "significant"],
         [(d, a, b, _f(H), _f(p), int(sig)) for d, a, b, H, p, sig in report.significance_rows()])
    emit("replications.csv", ["dataset", "replication", "technique", "accuracy", "fallback_rate"],
         [(d, r, t, _f(report.accuracy[d, t][r]), _f(report.fallback_rate[d, t][r]))
          for d in report.datasets for t in report.techniques
          for r in range(len(report.accuracy[d, t]))])
    if report.trace:
        emit("trace.csv", ["dataset", "replication", "query", "technique", "selected", "fallback", "label"],
             report.trace)

    cfg_path = out / "config.json"
    cfg_path.write_text(json.dumps(report.config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(cfg_path)
    return written


def read_summary(path) -> dict:
    """Parse ``summary.csv`` back into ``{(dataset, technique): (mean, std)}``."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return {(r["dataset"], r["technique"]): (float(r["mean"]), float(r["std"]))
                for r in csv.DictReader(fh)}
