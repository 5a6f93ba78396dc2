"""Random toy problems shared by the oracle tests."""

import numpy as np

from metades.data import Dataset
from metades.meta import HIDDEN, MetaClassifier, bce_loss
from metades.pool import LinearClassifier, Pool

from oracles import ToyProblem


def random_pool(rng, M, L, d, integer=False, temperature=1.0):
    members = []
    for _ in range(M):
        if integer:
            W = rng.integers(-2, 3, (L, d)).astype(float)
            b = rng.integers(-1, 2, L).astype(float)
        else:
            W = rng.normal(size=(L, d))
            b = rng.normal(size=L)
        members.append(LinearClassifier(W, b, temperature))
    return Pool(tuple(members))


def random_problem(seed, K=7, Kp=5, max_sel=100):
    """Pool + selection set + 5 queries. Every third instance lives on an
    integer grid so that distance and score ties actually occur."""
    rng = np.random.default_rng(seed)
    integer = seed % 3 == 0
    M = int(rng.integers(2, 11))
    L = int(rng.integers(2, 5))
    d = int(rng.integers(2, 5))
    n = int(rng.integers(max(K, Kp) + 1, max_sel + 1))
    pool = random_pool(rng, M, L, d, integer, temperature=float(rng.choice([0.5, 1.0, 2.0])))
    if integer:
        X = rng.integers(-3, 4, (n, d)).astype(float)
        Q = rng.integers(-3, 4, (5, d)).astype(float)
    else:
        X = rng.normal(size=(n, d))
        Q = rng.normal(size=(5, d))
    y = rng.integers(0, L, n)
    y[:L] = np.arange(L)      # every class present
    sel = Dataset(X, y, L, "sel")
    members = [(m.weights.tolist(), m.biases.tolist()) for m in pool.members]
    toy = ToyProblem(members, X.tolist(), y.tolist(), L, pool[0].temperature)
    return pool, sel, Q, toy


def constant_meta(logit, threshold=0.5, d=21):
    """A meta-classifier that gives every vector the same score."""
    return MetaClassifier(np.zeros((HIDDEN, d)), np.zeros(HIDDEN), np.zeros(HIDDEN), float(logit), threshold)


def numeric_grad(params, V, alpha, eps=1e-5):
    """Central finite differences of the mean BCE loss."""
    out = {}
    for k, p in params.items():
        g = np.zeros_like(p, dtype=float)
        flat = g.reshape(-1)
        for i in range(p.size):
            plus = {kk: vv.copy() for kk, vv in params.items()}
            minus = {kk: vv.copy() for kk, vv in params.items()}
            plus[k].reshape(-1)[i] += eps
            minus[k].reshape(-1)[i] -= eps
            flat[i] = (bce_loss(plus, V, alpha) - bce_loss(minus, V, alpha)) / (2 * eps)
        out[k] = g
    return out


def relative_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
