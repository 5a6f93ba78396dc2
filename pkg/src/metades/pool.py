"""Overproduction: a bagged pool of one-vs-all linear perceptrons."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .data import Dataset


class PoolError(ValueError):
    pass


@dataclass(frozen=True)
class PerceptronConfig:
    epochs: int = 100
    learning_rate: float = 0.01
    seed: int = 0
    posterior_temperature: float = 1.0

    def __post_init__(self):
        if self.epochs < 1:
            raise PoolError("epochs must be >= 1")
        if self.learning_rate <= 0 or self.posterior_temperature <= 0:
            raise PoolError("learning_rate and posterior_temperature must be positive")


@dataclass(frozen=True)
class LinearClassifier:
    """Per-class linear discriminants ``w_l . x + b_l``.

    Binary problems keep both rows even though they mirror each other.
    """

    weights: np.ndarray
    biases: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        b = np.array(self.biases, dtype=float)
        if W.ndim != 2 or b.shape != (W.shape[0],) or W.shape[0] < 2:
            raise PoolError(f"inconsistent shapes: weights {W.shape}, biases {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise PoolError("non-finite classifier parameters")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", b)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def num_features(self) -> int:
        return self.weights.shape[1]


def _as_batch(x):
    X = np.asarray(x, dtype=float)
    return (X[None, :], True) if X.ndim == 1 else (X, False)


def scores(c: LinearClassifier, x) -> np.ndarray:
    X, single = _as_batch(x)
    # explicit multiply+sum keeps each row's result independent of batch size,
    # so single-sample and batched predictions agree bit for bit
    S = (X[:, None, :] * c.weights[None, :, :]).sum(axis=-1) + c.biases
    return S[0] if single else S


def predict(c: LinearClassifier, x):
    """Argmax class; exact ties go to the lowest class index."""
    return np.argmax(scores(c, x), axis=-1)


_PROB_EPS = 1e-15


def posterior(c: LinearClassifier, x) -> np.ndarray:
    """Temperature-scaled softmax of the class scores."""
    z = scores(c, x) / c.temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    # saturated softmax would hit exactly 0 or 1; keep entries strictly inside
    return np.clip(e / e.sum(axis=-1, keepdims=True), _PROB_EPS, 1.0 - _PROB_EPS)


def decision_distance(c: LinearClassifier, x):
    """Perpendicular distance from ``x`` to the classifier's decision boundary.

    Binary: ``|w_1 . x + b_1| / ||w_1||``. Multi-class: distance to the
    nearest pairwise boundary between the predicted class and any other.
    A zero-norm discriminant yields 0.
    """
    X, single = _as_batch(x)
    W, b = c.weights, c.biases
    if c.num_classes == 2:
        w1 = W[1][None, :]
        margin = (X * w1).sum(axis=-1, keepdims=True) + b[1]
        norm = np.full(margin.shape, np.linalg.norm(W[1]))
        self_pair = np.zeros(margin.shape, dtype=bool)
    else:
        pred = predict(c, X)
        dW = W[pred][:, None, :] - W[None, :, :]          # (n, L, d)
        db = b[pred][:, None] - b[None, :]
        margin = (X[:, None, :] * dW).sum(axis=-1) + db
        norm = np.linalg.norm(dW, axis=-1)
        self_pair = np.arange(c.num_classes)[None, :] == pred[:, None]
    dist = np.abs(margin) / np.where(norm > 0, norm, 1.0)
    dist = np.where(norm > 0, dist, 0.0)
    dist = np.where(self_pair, np.inf, dist).min(axis=-1)
    return float(dist[0]) if single else dist


def train_perceptron(ds: Dataset, cfg: PerceptronConfig, num_classes: int | None = None) -> LinearClassifier:
    """Error-driven one-vs-all perceptron training.

    Each class row is a binary perceptron with targets +1 (its class) and -1
    (the rest). Samples are visited in a fresh seeded permutation every epoch;
    training stops early once an epoch makes no update.
    """
    L = num_classes or ds.num_classes
    if len(np.unique(ds.y)) < 2:
        raise PoolError("perceptron needs at least two classes in its training sample")
    targets = np.where(np.arange(L)[None, :] == ds.y[:, None], 1.0, -1.0)
    rng = np.random.default_rng(cfg.seed)
    orders = np.stack([rng.permutation(len(ds.y)) for _ in range(cfg.epochs)])
    W, b = _perceptron_epochs(np.ascontiguousarray(ds.X), targets, orders, cfg.learning_rate)
    return LinearClassifier(W, b, cfg.posterior_temperature)


@numba.njit(cache=True)
def _perceptron_epochs(X, targets, orders, lr):
    n, d = X.shape
    L = targets.shape[1]
    W = np.zeros((L, d))
    b = np.zeros(L)
    for e in range(orders.shape[0]):
        updated = False
        for i in orders[e]:
            for l in range(L):
                s = b[l]
                for k in range(d):
                    s += W[l, k] * X[i, k]
                t = targets[i, l]
                if t * s <= 0.0:
                    for k in range(d):
                        W[l, k] += lr * t * X[i, k]
                    b[l] += lr * t
                    updated = True
        if not updated:
            break
    return W, b


@dataclass(frozen=True)
class Pool:
    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise PoolError("empty pool")
        shapes = {m.weights.shape for m in members}
        if len(shapes) != 1:
            raise PoolError(f"pool members disagree on shape: {shapes}")
        object.__setattr__(self, "members", members)

    def __len__(self):
        return len(self.members)

    def __getitem__(self, i) -> LinearClassifier:
        return self.members[i]

    @property
    def num_classes(self) -> int:
        return self.members[0].num_classes

    def predict_matrix(self, X) -> np.ndarray:
        """``(n, M)`` hard labels; row j is the output profile of ``X[j]``."""
        return np.stack([predict(m, X) for m in self.members], axis=-1)

    def posterior_tensor(self, X) -> np.ndarray:
        """``(n, M, L)`` member posteriors."""
        return np.stack([posterior(m, X) for m in self.members], axis=-2)

    def distance_matrix(self, X) -> np.ndarray:
        """``(n, M)`` decision-boundary distances."""
        return np.stack([decision_distance(m, X) for m in self.members], axis=-1)

    def to_json(self) -> str:
        return json.dumps({
            "members": [
                {"weights": m.weights.tolist(), "biases": m.biases.tolist(), "temperature": m.temperature}
                for m in self.members
            ]
        })

    @classmethod
    def from_json(cls, text: str) -> "Pool":
        doc = json.loads(text)
        return cls(tuple(
            LinearClassifier(np.array(m["weights"]), np.array(m["biases"]), m["temperature"])
            for m in doc["members"]
        ))

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Pool":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


MAX_BOOTSTRAP_RETRIES = 100


def bagging_pool(train: Dataset, M: int = 10, cfg: PerceptronConfig | None = None, seed: int = 0) -> Pool:
    """Train ``M`` perceptrons, each on a bootstrap resample of ``train``.

    Every member gets its own seed stream spawned from ``seed``. Resamples
    containing a single class are redrawn.
    """
    cfg = cfg or PerceptronConfig()
    if len(train) == 0:
        raise PoolError("cannot bag an empty training set")
    if M < 1:
        raise PoolError("pool size must be >= 1")
    n = len(train)
    members = []
    for child in np.random.SeedSequence(seed).spawn(M):
        rng = np.random.default_rng(child)
        for _ in range(MAX_BOOTSTRAP_RETRIES):
            idx = rng.integers(0, n, n)
            if len(np.unique(train.y[idx])) >= 2:
                break
        else:
            raise PoolError(f"no two-class bootstrap sample after {MAX_BOOTSTRAP_RETRIES} draws")
        member_cfg = PerceptronConfig(cfg.epochs, cfg.learning_rate,
                                      int(rng.integers(2**63 - 1)), cfg.posterior_temperature)
        members.append(train_perceptron(train.subset(idx), member_cfg, train.num_classes))
    return Pool(tuple(members))
