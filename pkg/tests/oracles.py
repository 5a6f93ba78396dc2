"""Brute-force reference implementations written with plain Python loops.

Nothing here imports the package's selection or meta-feature code; the
oracles only read raw weights and arrays, so agreement with the vectorised
implementation is evidence rather than tautology.
"""

import math


def score(weights, biases, x):
    return [sum(w * xi for w, xi in zip(row, x)) + b for row, b in zip(weights, biases)]


def predict(weights, biases, x):
    s = score(weights, biases, x)
    best = 0
    for l in range(1, len(s)):
        if s[l] > s[best]:
            best = l
    return best


def posterior(weights, biases, x, temperature=1.0):
    s = [v / temperature for v in score(weights, biases, x)]
    m = max(s)
    e = [math.exp(v - m) for v in s]
    tot = sum(e)
    return [min(max(v / tot, 1e-15), 1 - 1e-15) for v in e]


def pool_predictions(members, X):
    """members: list of (weights, biases); returns list of per-sample lists."""
    return [[predict(w, b, x) for w, b in members] for x in X]


def knn(x, R, K, exclude=-1):
    """Exhaustive sort on (distance, index)."""
    cand = []
    for j, r in enumerate(R):
        if j == exclude:
            continue
        d = math.sqrt(sum((a - b) ** 2 for a, b in zip(x, r)))
        cand.append((d, j))
    cand.sort()
    return [j for _, j in cand[:K]], [d for d, _ in cand[:K]]


def profile_knn(p, P, Kp, exclude=-1):
    cand = []
    for j, q in enumerate(P):
        if j == exclude:
            continue
        cand.append((sum(abs(int(a) - int(b)) for a, b in zip(p, q)), j))
    cand.sort()
    return [j for _, j in cand[:Kp]]


def vote(preds, posts, num_classes, weights=None):
    """Weighted plurality; ties by summed posterior of voting members, then
    lowest class."""
    weights = weights or [1] * len(preds)
    counts = [0] * num_classes
    for p, w in zip(preds, weights):
        counts[p] += w
    top = max(counts)
    tied = [c for c in range(num_classes) if counts[c] == top]
    if len(tied) == 1:
        return tied[0]
    support = {c: sum(post[c] for post, w in zip(posts, weights) if w > 0) for c in tied}
    best = tied[0]
    for c in tied[1:]:
        if support[c] > support[best]:
            best = c
    return best


class ToyProblem:
    """A pool, a selection set and queries held as nested Python lists."""

    def __init__(self, members, Xsel, ysel, num_classes, temperature=1.0):
        self.members = members
        self.Xsel = [list(map(float, x)) for x in Xsel]
        self.ysel = [int(v) for v in ysel]
        self.L = num_classes
        self.T = temperature
        self.sel_preds = pool_predictions(members, self.Xsel)
        self.sel_correct = [[p == y for p in row] for row, y in zip(self.sel_preds, self.ysel)]

    def query(self, x):
        preds = [predict(w, b, x) for w, b in self.members]
        posts = [posterior(w, b, x, self.T) for w, b in self.members]
        return preds, posts

    def full_vote(self, x):
        preds, posts = self.query(x)
        return vote(preds, posts, self.L)

    def subset_vote(self, x, selected):
        preds, posts = self.query(x)
        return vote([preds[i] for i in selected], [posts[i] for i in selected], self.L)

    # baselines -----------------------------------------------------------

    def ola(self, x, K):
        nn, _ = knn(x, self.Xsel, K)
        preds, _ = self.query(x)
        M = len(self.members)
        hits = [sum(self.sel_correct[j][i] for j in nn) for i in range(M)]
        best = max(range(M), key=lambda i: (hits[i], -i))
        return preds[best]

    def lca(self, x, K):
        nn, _ = knn(x, self.Xsel, K)
        preds, _ = self.query(x)
        M = len(self.members)
        comp = []
        for i in range(M):
            same = [j for j in nn if self.ysel[j] == preds[i]]
            if not same:
                comp.append(0.0)
            else:
                comp.append(sum(self.sel_preds[j][i] == preds[i] for j in same) / len(same))
        best = max(range(M), key=lambda i: (comp[i], -i))
        return preds[best]

    def knora_e_selection(self, x, K):
        nn, _ = knn(x, self.Xsel, K)
        M = len(self.members)
        for k in range(K, 0, -1):
            sel = [i for i in range(M) if all(self.sel_correct[j][i] for j in nn[:k])]
            if sel:
                return sel, False
        return list(range(M)), True

    def knora_e(self, x, K):
        sel, _ = self.knora_e_selection(x, K)
        return self.subset_vote(x, sel)

    def _union(self, x, neighbours):
        preds, posts = self.query(x)
        M = len(self.members)
        w = [sum(self.sel_correct[j][i] for j in neighbours) for i in range(M)]
        if sum(w) == 0:
            return vote(preds, posts, self.L)
        return vote(preds, posts, self.L, w)

    def knora_u(self, x, K):
        return self._union(x, knn(x, self.Xsel, K)[0])

    def knop(self, x, Kp):
        preds, _ = self.query(x)
        return self._union(x, profile_knn(preds, self.sel_preds, Kp))

    # meta-features ---------------------------------------------------------

    def distance(self, i, x):
        w, b = self.members[i]
        if len(w) == 2:
            n = math.sqrt(sum(v * v for v in w[1]))
            return 0.0 if n == 0 else abs(sum(a * c for a, c in zip(w[1], x)) + b[1]) / n
        yhat = predict(w, b, x)
        best = math.inf
        for l in range(len(w)):
            if l == yhat:
                continue
            dw = [a - c for a, c in zip(w[yhat], w[l])]
            n = math.sqrt(sum(v * v for v in dw))
            d = 0.0 if n == 0 else abs(sum(a * c for a, c in zip(dw, x)) + b[yhat] - b[l]) / n
            best = min(best, d)
        return best

    def meta_vector(self, i, x, K, Kp):
        w, b = self.members[i]
        nn, _ = knn(x, self.Xsel, K)
        preds, _ = self.query(x)
        pn = profile_knn(preds, self.sel_preds, Kp)
        f1 = [1.0 if predict(w, b, self.Xsel[j]) == self.ysel[j] else 0.0 for j in nn]
        f2 = [posterior(w, b, self.Xsel[j], self.T)[self.ysel[j]] for j in nn]
        f3 = sum(f1) / K
        f4 = [1.0 if predict(w, b, self.Xsel[j]) == self.ysel[j] else 0.0 for j in pn]
        return f1 + f2 + [f3] + f4 + [self.distance(i, x)]
