"""Meta-classifier: a one-hidden-layer MLP that predicts whether a pool member
is competent for a query, plus assembly of its training data per scenario."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .competence import MetaDataset

HIDDEN = 10
_SCORE_EPS = 1e-15


class MetaTrainingError(ValueError):
    pass


@dataclass(frozen=True)
class MetaTrainConfig:
    max_epochs: int = 300
    learning_rate: float = 0.1
    patience: int = 5
    val_fraction: float = 0.25
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.val_fraction < 1:
            raise MetaTrainingError("val_fraction must be in (0, 1)")
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise MetaTrainingError("max_epochs, patience and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise MetaTrainingError("learning_rate must be positive")


@dataclass(frozen=True)
class MetaClassifier:
    """tanh hidden layer of width 10, single sigmoid output."""

    W1: np.ndarray   # (HIDDEN, input_dim)
    b1: np.ndarray   # (HIDDEN,)
    w2: np.ndarray   # (HIDDEN,)
    b2: float
    decision_threshold: float = 0.5
    history: tuple = field(default=(), compare=False)
    best_epoch: int = 0

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    def params(self) -> dict:
        return {"W1": self.W1, "b1": self.b1, "w2": self.w2, "b2": np.array(self.b2)}

    def score(self, V) -> np.ndarray:
        """Competence in (0, 1); saturated outputs are kept off the endpoints."""
        p = forward(self.params(), np.asarray(V, dtype=float))[0]
        return np.clip(p, _SCORE_EPS, 1.0 - _SCORE_EPS)

    def competent(self, V) -> np.ndarray:
        return self.score(V) >= self.decision_threshold

    def to_json(self) -> str:
        return json.dumps({
            "W1": self.W1.tolist(), "b1": self.b1.tolist(), "w2": self.w2.tolist(),
            "b2": float(self.b2), "decision_threshold": self.decision_threshold,
            "best_epoch": self.best_epoch,
        })

    @classmethod
    def from_json(cls, text: str) -> "MetaClassifier":
        d = json.loads(text)
        return cls(np.array(d["W1"]), np.array(d["b1"]), np.array(d["w2"]), float(d["b2"]),
                   d.get("decision_threshold", 0.5), best_epoch=d.get("best_epoch", 0))

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MetaClassifier":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def write_history(self, path):
        """Training curve as ``epoch,train_acc,val_acc`` rows."""
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_acc", "val_acc"])
            for epoch, tr, va in self.history:
                w.writerow([epoch, repr(tr), repr(va)])


def _sigmoid(z):
    # split form avoids overflow in exp for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(params: Mapping, V: np.ndarray):
    V = np.atleast_2d(V)
    H = np.tanh(V @ params["W1"].T + params["b1"])
    p = _sigmoid(H @ params["w2"] + params["b2"])
    return p, H


def bce_loss(params: Mapping, V: np.ndarray, alpha: np.ndarray) -> float:
    """Mean binary cross-entropy, computed from logits for stability."""
    V = np.atleast_2d(V)
    H = np.tanh(V @ params["W1"].T + params["b1"])
    z = H @ params["w2"] + params["b2"]
    return float(np.mean(np.logaddexp(0.0, z) - alpha * z))


def loss_and_grad(params: Mapping, V: np.ndarray, alpha: np.ndarray):
    """Mean BCE loss and its gradient with respect to every parameter."""
    V = np.atleast_2d(V)
    n = V.shape[0]
    p, H = forward(params, V)
    loss = bce_loss(params, V, alpha)
    dz = (p - alpha) / n                       # d loss / d output logit
    g_w2 = H.T @ dz
    g_b2 = dz.sum()
    dA = np.outer(dz, params["w2"]) * (1.0 - H ** 2)
    g_W1 = dA.T @ V
    g_b1 = dA.sum(axis=0)
    return loss, {"W1": g_W1, "b1": g_b1, "w2": g_w2, "b2": np.array(g_b2)}


def init_params(input_dim: int, rng: np.random.Generator, hidden: int = HIDDEN) -> dict:
    lim1 = np.sqrt(6.0 / (input_dim + hidden))
    lim2 = np.sqrt(6.0 / (hidden + 1))
    return {
        "W1": rng.uniform(-lim1, lim1, (hidden, input_dim)),
        "b1": np.zeros(hidden),
        "w2": rng.uniform(-lim2, lim2, hidden),
        "b2": np.array(0.0),
    }


def split_meta(md: MetaDataset, val_fraction: float = 0.25, seed: int = 0):
    """Stratified (on alpha) train/validation index split."""
    rng = np.random.default_rng(seed)
    train, val = [], []
    for a in (0, 1):
        idx = rng.permutation(np.flatnonzero(md.alpha == a))
        n_val = int(round(val_fraction * len(idx)))
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def _accuracy(params, V, alpha, threshold=0.5) -> float:
    return float(np.mean((forward(params, V)[0] >= threshold) == (alpha == 1)))


def train_meta(md: MetaDataset, cfg: MetaTrainConfig | None = None, split=None) -> MetaClassifier:
    """Fit the meta-classifier with mini-batch gradient descent on BCE.

    Validation accuracy is measured after every epoch. Training stops once it
    has not beaten the best value for ``patience`` consecutive epochs (ties
    count as no improvement) and the weights of the best epoch are returned.

    ``split`` may supply precomputed ``(train_idx, val_idx)``; otherwise a
    stratified split of ``cfg.val_fraction`` is drawn.
    """
    cfg = cfg or MetaTrainConfig()
    if len(md) == 0:
        raise MetaTrainingError("empty meta-dataset")
    if len(np.unique(md.alpha)) < 2:
        raise MetaTrainingError(f"{md.provenance}: meta-dataset holds a single competence class")

    rng = np.random.default_rng(cfg.seed)
    if split is None:
        split = split_meta(md, cfg.val_fraction, int(rng.integers(2**63 - 1)))
    tr, va = split
    if len(tr) == 0 or len(va) == 0:
        raise MetaTrainingError("meta-dataset too small for a train/validation split")
    Vt, at = md.V[tr], md.alpha[tr].astype(float)
    Vv, av = md.V[va], md.alpha[va].astype(float)

    params = init_params(md.V.shape[1], rng)
    best = {k: v.copy() for k, v in params.items()}
    best_acc, best_epoch, stale = -1.0, 0, 0
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(tr))
        for start in range(0, len(order), cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            _, g = loss_and_grad(params, Vt[b], at[b])
            for k in params:
                params[k] = params[k] - cfg.learning_rate * g[k]
        val_acc = _accuracy(params, Vv, av)
        history.append((epoch, _accuracy(params, Vt, at), val_acc))
        if val_acc > best_acc:
            best_acc, best_epoch, stale = val_acc, epoch, 0
            best = {k: v.copy() for k, v in params.items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    return MetaClassifier(best["W1"], best["b1"], best["w2"], float(best["b2"]),
                          history=tuple(history), best_epoch=best_epoch)


def competence_score(m: MetaClassifier, v) -> float | np.ndarray:
    """Meta-classifier output in (0, 1) for one vector or a batch."""
    v = np.asarray(v, dtype=float)
    s = m.score(v)
    return float(s[0]) if v.ndim == 1 else s


def meta_accuracy(m: MetaClassifier, md: MetaDataset) -> float:
    """Fraction of rows where ``score >= threshold`` agrees with ``alpha``."""
    if len(md) == 0:
        raise MetaTrainingError("meta accuracy of an empty meta-dataset")
    return float(np.mean(m.competent(md.V) == (md.alpha == 1)))


class ScenarioKind(str, enum.Enum):
    DEPENDENT = "dependent"
    INDEPENDENT = "independent"
    ALL = "all"


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind
    target: str
    sources: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        object.__setattr__(self, "sources", tuple(self.sources))
        if self.kind is ScenarioKind.INDEPENDENT:
            if len(self.sources) != 1:
                raise MetaTrainingError("independent scenario takes exactly one source dataset")
            if self.sources[0] == self.target:
                raise MetaTrainingError("independent scenario needs a source different from the target")


def assemble_scenario(s: Scenario, per_dataset_meta: Mapping[str, MetaDataset],
                      order: Sequence[str] | None = None) -> MetaDataset:
    """Meta-training data for one scenario.

    DEPENDENT returns the target's own meta-data, INDEPENDENT the single
    source's, ALL the concatenation of every dataset in ``order`` (mapping
    order by default). Inputs are never modified.
    """
    def get(name):
        if name not in per_dataset_meta:
            raise MetaTrainingError(f"no meta-data for dataset {name!r}")
        return per_dataset_meta[name]

    if s.kind is ScenarioKind.DEPENDENT:
        return get(s.target)
    if s.kind is ScenarioKind.INDEPENDENT:
        return get(s.sources[0])
    names = list(order if order is not None else (s.sources or per_dataset_meta.keys()))
    return MetaDataset.concat([get(n) for n in names], provenance="all")
