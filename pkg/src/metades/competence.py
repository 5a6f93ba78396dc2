"""Meta-training data: consensus-based query selection, regions of
competence, output profiles and the five meta-feature groups.

A meta-feature vector for one (classifier, query) pair is laid out as::

    f1[K] | f2[K] | f3 | f4[K_p] | f5

f1  neighbour correctness bits       f2  posterior of each neighbour's true class
f3  local accuracy (mean of f1)      f4  correctness on output-profile neighbours
f5  distance of the query to the classifier's decision boundary
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset
from .pool import LinearClassifier, Pool, decision_distance, posterior, predict


class EmptyMetaDataError(ValueError):
    """No query fell below the consensus threshold."""


def meta_dim(K: int, Kp: int) -> int:
    return 2 * K + Kp + 2


@dataclass(frozen=True)
class RegionOfCompetence:
    indices: np.ndarray
    distances: np.ndarray
    X: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class OutputProfile:
    decisions: np.ndarray
    true_label: int | None = None
    # feature vector of the sample this profile was computed from
    x: np.ndarray | None = None


@dataclass(frozen=True)
class ReferenceSet:
    """A labelled reference partition with the pool's behaviour precomputed.

    Serves as the neighbour source both during meta-training (on the
    meta-training partition) and at inference time (on the dynamic selection
    partition).
    """

    data: Dataset
    preds: np.ndarray       # (n, M) hard labels = output profiles
    correct: np.ndarray     # (n, M) bool
    post_true: np.ndarray   # (n, M) member posterior of the sample's true class

    @classmethod
    def build(cls, pool: Pool, ds: Dataset) -> "ReferenceSet":
        preds = pool.predict_matrix(ds.X)
        post = pool.posterior_tensor(ds.X)
        post_true = np.take_along_axis(post, ds.y[:, None, None], axis=-1)[..., 0]
        return cls(ds, preds, preds == ds.y[:, None], post_true)

    def __len__(self):
        return len(self.data)

    @property
    def X(self):
        return self.data.X

    @property
    def y(self):
        return self.data.y


def _plurality_counts(preds: np.ndarray, num_classes: int) -> np.ndarray:
    return np.stack([(preds == c).sum(axis=-1) for c in range(num_classes)], axis=-1)


def consensus_degree(pool: Pool, x):
    """Fraction of pool members voting for the plurality class."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    preds = pool.predict_matrix(X[None] if single else X)
    H = _plurality_counts(preds, pool.num_classes).max(axis=-1) / len(pool)
    return float(H[0]) if single else H


def select_meta_queries(pool: Pool, t_lambda: Dataset, h_C: float) -> np.ndarray:
    """Indices of samples whose consensus is strictly below ``h_C``."""
    if len(t_lambda) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(consensus_degree(pool, t_lambda.X) < h_C)


def _ranked(D: np.ndarray, k: int):
    # stable sort: equal distances keep ascending reference index
    order = np.argsort(D, axis=1, kind="stable")[:, :k]
    return order, np.take_along_axis(D, order, axis=1)


def nearest_neighbors(Q, R, K: int, exclude=None):
    """Euclidean K-NN of each row of ``Q`` among rows of ``R``.

    ``exclude`` optionally gives, per query, one reference index to skip
    (``-1`` for none). Returns ``(indices, distances)``, each ``(nq, K)``.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.asarray(R, dtype=float)
    available = len(R) - (0 if exclude is None else int(np.any(np.asarray(exclude) >= 0)))
    if K < 1 or K > available:
        raise ValueError(f"K={K} needs between 1 and {available} reference samples")
    D = np.sqrt(((Q[:, None, :] - R[None, :, :]) ** 2).sum(axis=-1))
    if exclude is not None:
        _mask(D, exclude, np.inf)
    return _ranked(D, K)


def nearest_profiles(Pq, Pr, Kp: int, exclude=None):
    """Manhattan-distance K_p-NN in decision space."""
    Pq = np.atleast_2d(np.asarray(Pq))
    Pr = np.asarray(Pr)
    available = len(Pr) - (0 if exclude is None else int(np.any(np.asarray(exclude) >= 0)))
    if Kp < 1 or Kp > available:
        raise ValueError(f"K_p={Kp} needs between 1 and {available} reference profiles")
    D = np.abs(Pq[:, None, :].astype(np.int64) - Pr[None, :, :].astype(np.int64)).sum(axis=-1)
    D = D.astype(float)
    if exclude is not None:
        _mask(D, exclude, np.inf)
    return _ranked(D, Kp)


def _mask(D, exclude, value):
    exclude = np.asarray(exclude, dtype=np.int64)
    rows = np.flatnonzero(exclude >= 0)
    D[rows, exclude[rows]] = value


def region_of_competence(x, ref: Dataset, K: int, exclude: int = -1) -> RegionOfCompetence:
    idx, dist = nearest_neighbors(np.asarray(x, dtype=float)[None], ref.X, K,
                                  None if exclude < 0 else [exclude])
    return RegionOfCompetence(idx[0], dist[0], ref.X[idx[0]], ref.y[idx[0]])


def output_profile(pool: Pool, x, true_label: int | None = None) -> OutputProfile:
    x = np.asarray(x, dtype=float)
    return OutputProfile(pool.predict_matrix(x[None])[0], true_label, x)


def reference_profiles(pool: Pool, ref: Dataset) -> list[OutputProfile]:
    P = pool.predict_matrix(ref.X)
    return [OutputProfile(P[j], int(ref.y[j]), ref.X[j]) for j in range(len(ref))]


def profile_neighbors(p: OutputProfile, refs: Sequence[OutputProfile], Kp: int) -> list[OutputProfile]:
    """The ``Kp`` reference profiles closest to ``p`` in Manhattan distance."""
    idx, _ = nearest_profiles(p.decisions[None], np.stack([r.decisions for r in refs]), Kp)
    return [refs[i] for i in idx[0]]


def extract_meta_features(c: LinearClassifier, x, roc: RegionOfCompetence,
                          pn: Sequence[OutputProfile], K: int | None = None,
                          Kp: int | None = None) -> np.ndarray:
    """Meta-feature vector of a single classifier for a single query.

    This is the straightforward per-classifier route; the batched
    :func:`query_meta_features` computes the same quantities for a whole pool.
    """
    if K is not None and len(roc) != K:
        raise ValueError(f"region of competence has {len(roc)} samples, expected {K}")
    if Kp is not None and len(pn) != Kp:
        raise ValueError(f"{len(pn)} profile neighbours, expected {Kp}")
    f1 = (predict(c, roc.X) == roc.y).astype(float)
    f2 = posterior(c, roc.X)[np.arange(len(roc)), roc.y]
    f3 = f1.mean()
    Xp = np.stack([q.x for q in pn])
    yp = np.array([q.true_label for q in pn])
    f4 = (predict(c, Xp) == yp).astype(float)
    f5 = decision_distance(c, np.asarray(x, dtype=float))
    return np.concatenate([f1, f2, [f3], f4, [f5]])


def query_meta_features(pool: Pool, ref: ReferenceSet, Xq, K: int, Kp: int, exclude=None):
    """Meta-features of every pool member for every query.

    Returns ``(V, preds, nn_idx, pn_idx)`` where ``V`` has shape
    ``(nq, M, 2K + Kp + 2)`` and ``preds`` is the ``(nq, M)`` matrix of the
    members' labels for the queries.
    """
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    preds = pool.predict_matrix(Xq)
    nn_idx, _ = nearest_neighbors(Xq, ref.X, K, exclude)
    pn_idx, _ = nearest_profiles(preds, ref.preds, Kp, exclude)
    f1 = ref.correct[nn_idx].transpose(0, 2, 1).astype(float)     # (nq, M, K)
    f2 = ref.post_true[nn_idx].transpose(0, 2, 1)
    f3 = f1.mean(axis=-1, keepdims=True)
    f4 = ref.correct[pn_idx].transpose(0, 2, 1).astype(float)
    f5 = pool.distance_matrix(Xq)[..., None]
    V = np.concatenate([f1, f2, f3, f4, f5], axis=-1)
    return V, preds, nn_idx, pn_idx


@dataclass(frozen=True)
class MetaDataset:
    """Meta-feature vectors with their competence labels.

    Rows are ordered by query, then by classifier.
    """

    V: np.ndarray
    alpha: np.ndarray
    classifier_index: np.ndarray
    query_index: np.ndarray
    K: int
    Kp: int
    provenance: str = ""

    def __post_init__(self):
        if self.V.ndim != 2 or self.V.shape[1] != meta_dim(self.K, self.Kp):
            raise ValueError(f"meta vectors must have width {meta_dim(self.K, self.Kp)}, got {self.V.shape}")
        n = self.V.shape[0]
        for arr in (self.alpha, self.classifier_index, self.query_index):
            if arr.shape != (n,):
                raise ValueError("meta-dataset columns disagree in length")

    def __len__(self):
        return self.V.shape[0]

    def subset(self, idx) -> "MetaDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return MetaDataset(self.V[idx], self.alpha[idx], self.classifier_index[idx],
                           self.query_index[idx], self.K, self.Kp, self.provenance)

    @classmethod
    def concat(cls, parts: Sequence["MetaDataset"], provenance: str = "") -> "MetaDataset":
        if not parts:
            raise ValueError("nothing to concatenate")
        K, Kp = parts[0].K, parts[0].Kp
        if any((p.K, p.Kp) != (K, Kp) for p in parts):
            raise ValueError("meta-datasets built with different K / K_p")
        return cls(np.concatenate([p.V for p in parts]),
                   np.concatenate([p.alpha for p in parts]),
                   np.concatenate([p.classifier_index for p in parts]),
                   np.concatenate([p.query_index for p in parts]),
                   K, Kp, provenance or "+".join(p.provenance for p in parts))

    def columns(self) -> list[str]:
        return ([f"f1_{k}" for k in range(self.K)] + [f"f2_{k}" for k in range(self.K)] + ["f3"]
                + [f"f4_{k}" for k in range(self.Kp)] + ["f5", "alpha", "classifier_index", "query_index"])

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            for v, a, c, q in zip(self.V, self.alpha, self.classifier_index, self.query_index):
                w.writerow([repr(float(t)) for t in v] + [int(a), int(c), int(q)])

    @classmethod
    def from_csv(cls, path, K: int, Kp: int, provenance: str = "") -> "MetaDataset":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))[1:]
        arr = np.array(rows, dtype=float).reshape(len(rows), -1)
        d = meta_dim(K, Kp)
        return cls(arr[:, :d], arr[:, d].astype(np.int64), arr[:, d + 1].astype(np.int64),
                   arr[:, d + 2].astype(np.int64), K, Kp, provenance)


def build_meta_dataset(pool: Pool, t_lambda: Dataset, K: int = 7, Kp: int = 5,
                       h_C: float = 0.70) -> MetaDataset:
    """Meta-training set from the low-consensus samples of ``t_lambda``.

    Each selected query yields one row per pool member. Neighbours and profile
    neighbours come from ``t_lambda`` with the query itself left out. ``alpha``
    is 1 when the member labels the query correctly.
    """
    if len(t_lambda) <= max(K, Kp):
        raise ValueError(f"meta-training set of {len(t_lambda)} samples is too small for K={K}, K_p={Kp}")
    selected = select_meta_queries(pool, t_lambda, h_C)
    if selected.size == 0:
        raise EmptyMetaDataError(
            f"{t_lambda.name}: no sample has consensus below h_C={h_C}, so the "
            "meta-training set is empty; raise h_C to admit more queries")
    ref = ReferenceSet.build(pool, t_lambda)
    V, preds, _, _ = query_meta_features(pool, ref, t_lambda.X[selected], K, Kp, exclude=selected)
    M = len(pool)
    alpha = (preds == t_lambda.y[selected][:, None]).astype(np.int64)
    return MetaDataset(
        V.reshape(-1, V.shape[-1]),
        alpha.reshape(-1),
        np.tile(np.arange(M), len(selected)),
        np.repeat(selected, M),
        K, Kp, t_lambda.name,
    )
