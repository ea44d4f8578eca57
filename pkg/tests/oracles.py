"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

import numpy as np
from scipy import stats


def brute_auc(scores, labels) -> float:
    """Count every (positive, negative) pair; ties count one half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    pos, neg = s[y], s[~y]
    d = pos[:, None] - neg[None, :]
    return float(((d > 0).sum() + 0.5 * (d == 0).sum()) / d.size)


def quadrature_h(scores, labels, severity=(2.0, 2.0), grid: int = 100_000) -> float:
    """H-measure by midpoint integration over ``grid`` cost values.

    At each cost the minimum loss is taken over every threshold of the raw
    scores (no hull construction), so this checks the hull shortcut too.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    pi1 = y.mean()
    pi0 = 1.0 - pi1
    thr = np.r_[np.inf, np.unique(s)[::-1]]
    tpr = np.array([(s[y] >= t).mean() for t in thr])
    fpr = np.array([(s[~y] >= t).mean() for t in thr])
    c = (np.arange(grid) + 0.5) / grid
    w = stats.beta.pdf(c, *severity) / grid
    loss = np.empty(grid)
    for k in range(0, grid, 5000):
        cc = c[k : k + 5000, None]
        loss[k : k + 5000] = (cc * pi0 * fpr + (1 - cc) * pi1 * (1 - tpr)).min(axis=1)
    lmax = np.minimum(c * pi0, (1 - c) * pi1)
    return float(1.0 - np.sum(w * loss) / np.sum(w * lmax))


def random_scored_instance(rng: np.random.Generator, n_max: int = 1000, ties: bool = True):
    n = int(rng.integers(2, n_max + 1))
    y = rng.random(n) < rng.uniform(0.05, 0.95)
    y[0], y[1] = True, False
    if ties:
        s = rng.integers(0, int(rng.integers(2, 50)), size=n).astype(float)
    else:
        s = rng.normal(size=n)
    s = s + y * rng.uniform(0, 3)
    return s, y.astype(int)


def numeric_grad(f, v: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.empty_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        g[i] = (f(v + e) - f(v - e)) / (2 * h)
    return g
