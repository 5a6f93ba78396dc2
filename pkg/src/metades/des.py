"""Generalization phase: dynamic selection of pool members per query.

Every technique is written as a small ``*_select`` core that works on
precomputed per-query information (:class:`QueryInfo`). The public
``*_classify`` functions build that information for a single feature vector;
:class:`QueryBatch` builds it for a whole test partition at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .competence import MetaDataset, ReferenceSet, nearest_neighbors, nearest_profiles, query_meta_features
from .data import Dataset
from .meta import MetaClassifier
from .pool import Pool

# The dynamic selection partition with pool predictions precomputed.
DSELIndex = ReferenceSet


def build_dsel_index(pool: Pool, dsel: Dataset) -> DSELIndex:
    return ReferenceSet.build(pool, dsel)


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple
    fallback_used: bool
    label: int


@dataclass(frozen=True)
class QueryInfo:
    preds: np.ndarray          # (M,) member labels for the query
    post: np.ndarray           # (M, L) member posteriors for the query
    nn: np.ndarray | None = None   # (K,) feature-space neighbours in D_SEL
    pn: np.ndarray | None = None   # (K_p,) decision-space neighbours in D_SEL
    V: np.ndarray | None = None    # (M, dim) meta-feature vectors


def vote(preds: np.ndarray, post: np.ndarray, num_classes: int, weights=None) -> int:
    """Plurality vote with posterior tie-break.

    Among classes tied on votes, the one with the largest summed posterior
    over the voting members wins; remaining ties go to the lowest class.
    """
    w = np.ones(len(preds), dtype=np.int64) if weights is None else np.asarray(weights)
    counts = np.bincount(preds, weights=w, minlength=num_classes)
    tied = np.flatnonzero(counts == counts.max())
    if len(tied) == 1:
        return int(tied[0])
    voters = w > 0
    support = post[voters][:, tied].sum(axis=0)
    return int(tied[np.argmax(support)])


def _vote_subset(q: QueryInfo, selected: np.ndarray, fallback: bool = False) -> SelectionResult:
    label = vote(q.preds[selected], q.post[selected], q.post.shape[1])
    return SelectionResult(tuple(int(i) for i in selected), fallback, label)


def _full_pool(q: QueryInfo, fallback: bool) -> SelectionResult:
    return _vote_subset(q, np.arange(len(q.preds)), fallback)


def static_select(q: QueryInfo, idx: DSELIndex | None = None) -> SelectionResult:
    return _full_pool(q, False)


def meta_select(q: QueryInfo, meta: MetaClassifier) -> SelectionResult:
    selected = np.flatnonzero(meta.competent(q.V))
    if selected.size == 0:
        return _full_pool(q, True)
    return _vote_subset(q, selected)


def ola_select(q: QueryInfo, idx: DSELIndex) -> SelectionResult:
    hits = idx.correct[q.nn].sum(axis=0)
    best = int(np.argmax(hits))
    return SelectionResult((best,), False, int(q.preds[best]))


def lca_competence(q: QueryInfo, idx: DSELIndex) -> np.ndarray:
    """Per member: accuracy on the neighbours whose true class is the
    member's predicted class for the query (0 when there are none)."""
    ny = idx.y[q.nn]                                  # (K,)
    same = ny[:, None] == q.preds[None, :]            # (K, M)
    denom = same.sum(axis=0)
    num = (same & idx.correct[q.nn]).sum(axis=0)
    return np.where(denom > 0, num / np.maximum(denom, 1), 0.0)


def lca_select(q: QueryInfo, idx: DSELIndex) -> SelectionResult:
    best = int(np.argmax(lca_competence(q, idx)))
    return SelectionResult((best,), False, int(q.preds[best]))


def knora_e_select(q: QueryInfo, idx: DSELIndex) -> SelectionResult:
    correct = idx.correct[q.nn]
    for k in range(len(q.nn), 0, -1):
        selected = np.flatnonzero(correct[:k].all(axis=0))
        if selected.size:
            return _vote_subset(q, selected)
    return _full_pool(q, True)


def _union_vote(q: QueryInfo, neighbours: np.ndarray, idx: DSELIndex) -> SelectionResult:
    w = idx.correct[neighbours].sum(axis=0)
    if w.sum() == 0:
        return _full_pool(q, True)
    label = vote(q.preds, q.post, q.post.shape[1], weights=w)
    return SelectionResult(tuple(int(i) for i in np.flatnonzero(w)), False, label)


def knora_u_select(q: QueryInfo, idx: DSELIndex) -> SelectionResult:
    return _union_vote(q, q.nn, idx)


def knop_select(q: QueryInfo, idx: DSELIndex) -> SelectionResult:
    return _union_vote(q, q.pn, idx)


def _query_info(pool: Pool, x, idx: DSELIndex, K: int | None = None, Kp: int | None = None,
                with_meta: bool = False) -> QueryInfo:
    x = np.asarray(x, dtype=float)[None]
    if with_meta:
        V, preds, nn, pn = query_meta_features(pool, idx, x, K, Kp)
        return QueryInfo(preds[0], pool.posterior_tensor(x)[0], nn[0], pn[0], V[0])
    preds = pool.predict_matrix(x)
    nn = nearest_neighbors(x, idx.X, K)[0][0] if K else None
    pn = nearest_profiles(preds, idx.preds, Kp)[0][0] if Kp else None
    return QueryInfo(preds[0], pool.posterior_tensor(x)[0], nn, pn)


def majority_vote(pool: Pool, selected, x) -> int:
    selected = np.asarray(sorted(selected), dtype=np.int64)
    if selected.size == 0:
        raise ValueError("majority vote over an empty ensemble")
    x = np.asarray(x, dtype=float)[None]
    preds = pool.predict_matrix(x)[0]
    post = pool.posterior_tensor(x)[0]
    return vote(preds[selected], post[selected], pool.num_classes)


def static_vote_classify(pool: Pool, x) -> int:
    return majority_vote(pool, range(len(pool)), x)


def des_meta_classify(pool: Pool, meta: MetaClassifier, x, idx: DSELIndex, K: int = 7,
                      Kp: int = 5) -> SelectionResult:
    if len(idx) < max(K, Kp):
        raise ValueError(f"D_SEL has {len(idx)} samples, needs at least {max(K, Kp)}")
    return meta_select(_query_info(pool, x, idx, K, Kp, with_meta=True), meta)


def ola_classify(pool: Pool, x, idx: DSELIndex, K: int = 7) -> int:
    return ola_select(_query_info(pool, x, idx, K=K), idx).label


def lca_classify(pool: Pool, x, idx: DSELIndex, K: int = 7) -> int:
    return lca_select(_query_info(pool, x, idx, K=K), idx).label


def knora_e_classify(pool: Pool, x, idx: DSELIndex, K: int = 7) -> int:
    return knora_e_select(_query_info(pool, x, idx, K=K), idx).label


def knora_u_classify(pool: Pool, x, idx: DSELIndex, K: int = 7) -> int:
    return knora_u_select(_query_info(pool, x, idx, K=K), idx).label


def knop_classify(pool: Pool, x, idx: DSELIndex, Kp: int = 5) -> int:
    return knop_select(_query_info(pool, x, idx, Kp=Kp), idx).label


BASELINES: dict[str, Callable[[QueryInfo, DSELIndex], SelectionResult]] = {
    "KNORA-E": knora_e_select,
    "KNORA-U": knora_u_select,
    "LCA": lca_select,
    "OLA": ola_select,
    "KNOP": knop_select,
    "STATIC": static_select,
}


@dataclass(frozen=True)
class QueryBatch:
    """Per-query neighbourhoods and meta-features for a whole partition."""

    preds: np.ndarray
    post: np.ndarray
    nn: np.ndarray
    pn: np.ndarray
    V: np.ndarray
    y: np.ndarray

    @classmethod
    def build(cls, pool: Pool, idx: DSELIndex, queries: Dataset, K: int, Kp: int) -> "QueryBatch":
        V, preds, nn, pn = query_meta_features(pool, idx, queries.X, K, Kp)
        return cls(preds, pool.posterior_tensor(queries.X), nn, pn, V, queries.y)

    def __len__(self):
        return len(self.y)

    def info(self, j: int) -> QueryInfo:
        return QueryInfo(self.preds[j], self.post[j], self.nn[j], self.pn[j], self.V[j])

    def run(self, technique: str, idx: DSELIndex, meta: MetaClassifier | None = None) -> list[SelectionResult]:
        if meta is not None:
            # one batched forward pass, then per-query selection
            competent = meta.competent(self.V.reshape(-1, self.V.shape[-1])).reshape(self.preds.shape)
            out = []
            for j in range(len(self)):
                q = self.info(j)
                sel = np.flatnonzero(competent[j])
                out.append(_vote_subset(q, sel) if sel.size else _full_pool(q, True))
            return out
        select = BASELINES[technique]
        return [select(self.info(j), idx) for j in range(len(self))]

    def meta_dataset(self, K: int, Kp: int, provenance: str = "") -> MetaDataset:
        """Every (query, member) pair as a meta-sample; alpha is the member's
        correctness on the query. Measures a selector on the same
        distribution it faces at inference time."""
        nq, M, _ = self.V.shape
        return MetaDataset(self.V.reshape(nq * M, -1),
                           (self.preds == self.y[:, None]).astype(np.int64).reshape(-1),
                           np.tile(np.arange(M), nq), np.repeat(np.arange(nq), M), K, Kp, provenance)

    def accuracy(self, results: list[SelectionResult]) -> float:
        return float(np.mean(np.array([r.label for r in results]) == self.y))
