"""Shapley attributions with background-substitution value function.

For a coalition ``S`` the value is the mean prediction over background rows
``b`` after overwriting the features in ``S`` with those of the explained
row ``x``. Coalitions are encoded as bit masks over feature positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from ..dataset import Dataset
from ..errors import ConfigError, DataError
from .ale import as_predictor

EXACT_LIMIT = 25


@dataclass(frozen=True)
class ShapleyConfig:
    mode: str = "auto"  # auto | exact | sampling
    exact_max_features: int = 12
    permutations: int = 1000
    seed: int = 0
    sample_size: int = 1000
    background_size: int = 100
    chunk_rows: int = 500_000

    def __post_init__(self) -> None:
        if self.mode not in ("auto", "exact", "sampling"):
            raise ConfigError(f"unknown Shapley mode {self.mode!r}")
        if self.permutations < 1 or self.sample_size < 1 or self.background_size < 1:
            raise ConfigError("permutations, sample_size and background_size must be >= 1")


def _bits(masks: np.ndarray, p: int) -> np.ndarray:
    return ((masks[:, None] >> np.arange(p)) & 1).astype(bool)


def coalition_values(f, x: np.ndarray, background: np.ndarray, masks: np.ndarray, chunk_rows: int = 500_000) -> np.ndarray:
    """Mean prediction over the background for each coalition mask."""
    nb, p = background.shape
    out = np.empty(masks.size)
    per = max(1, chunk_rows // nb)
    for s in range(0, masks.size, per):
        on = _bits(masks[s : s + per], p)
        rows = np.where(on[:, None, :], x[None, None, :], background[None, :, :])
        pred = np.asarray(f(rows.reshape(-1, p)), dtype=float)
        out[s : s + per] = pred.reshape(on.shape[0], nb).mean(axis=1)
    return out


def _exact(values: np.ndarray, p: int) -> np.ndarray:
    masks = np.arange(1 << p)
    size = np.array([bin(m).count("1") for m in range(1 << p)])
    weight = np.array([factorial(s) * factorial(p - s - 1) / factorial(p) for s in range(p)])
    phi = np.empty(p)
    for j in range(p):
        without = masks[(masks >> j) & 1 == 0]
        phi[j] = np.sum(weight[size[without]] * (values[without | (1 << j)] - values[without]))
    return phi


def shapley_instance(model, background: Dataset | np.ndarray, x, config: ShapleyConfig = ShapleyConfig()) -> np.ndarray:
    """Attributions of one row; they sum to ``f(x) - mean f(background)``.

    Exact mode enumerates all ``2**p`` coalitions. Sampling mode averages
    marginal contributions along ``config.permutations`` seeded orderings,
    drawn as random permutations each paired with its reverse; each
    distinct coalition is evaluated only once.
    """
    bg = background.features if isinstance(background, Dataset) else np.asarray(background, dtype=float)
    if bg.ndim != 2 or bg.shape[0] == 0:
        raise DataError("background must be a nonempty 2-D table")
    x = np.asarray(x, dtype=float).ravel()
    p = bg.shape[1]
    if x.size != p:
        raise DataError(f"row width {x.size} does not match background width {p}")
    f = as_predictor(model)
    mode = config.mode
    if mode == "auto":
        mode = "exact" if p <= config.exact_max_features else "sampling"
    if mode == "exact":
        if p > EXACT_LIMIT:
            raise ConfigError(f"exact Shapley enumeration refused for p={p} > {EXACT_LIMIT}")
        values = coalition_values(f, x, bg, np.arange(1 << p), config.chunk_rows)
        return _exact(values, p)

    m = config.permutations
    rng = np.random.default_rng(config.seed)
    # antithetic pairs: each ordering is followed by its reverse, which cancels
    # much of the ordering noise for features with strong interactions
    half = [rng.permutation(p) for _ in range((m + 1) // 2)]
    perms = np.array([q for h in half for q in (h, h[::-1])][:m])
    prefix = np.zeros((config.permutations, p + 1), dtype=np.int64)
    prefix[:, 1:] = np.cumsum(np.left_shift(1, perms), axis=1)
    unique, inverse = np.unique(prefix, return_inverse=True)
    v = coalition_values(f, x, bg, unique, config.chunk_rows)[inverse.reshape(prefix.shape)]
    phi = np.zeros(p)
    np.add.at(phi, perms.ravel(), np.diff(v, axis=1).ravel())
    return phi / m


@dataclass(frozen=True)
class ShapleySummary:
    feature_names: tuple[str, ...]
    phi: np.ndarray
    baseline: float
    importance: np.ndarray
    ranking: np.ndarray
    instance_indices: np.ndarray

    def to_dict(self, include_phi: bool = False) -> dict:
        doc = {
            "baseline": self.baseline,
            "instances": int(self.phi.shape[0]),
            "importance": [
                {"feature": self.feature_names[j], "importance": float(self.importance[j]), "rank": r + 1}
                for r, j in enumerate(self.ranking)
            ],
        }
        if include_phi:
            doc["phi"] = self.phi.tolist()
            doc["instance_indices"] = self.instance_indices.tolist()
        return doc


def rank_importance(importance: np.ndarray) -> np.ndarray:
    """Descending order, ties broken by lower feature index."""
    return np.lexsort((np.arange(importance.size), -importance))


def global_shapley(
    model, d: Dataset, config: ShapleyConfig = ShapleyConfig(), background: Dataset | None = None
) -> ShapleySummary:
    """Mean absolute attribution per feature over a seeded subsample of ``d``."""
    if d.n == 0:
        raise DataError("empty dataset")
    rng = np.random.default_rng(config.seed)
    take = np.sort(rng.choice(d.n, size=min(config.sample_size, d.n), replace=False))
    if background is None:
        pick = np.sort(rng.choice(d.n, size=min(config.background_size, d.n), replace=False))
        bg = d.features[pick]
    else:
        bg = background.features
    f = as_predictor(model)
    phi = np.array([shapley_instance(f, bg, d.features[i], config) for i in take])
    importance = np.abs(phi).mean(axis=0)
    return ShapleySummary(
        feature_names=d.feature_names,
        phi=phi,
        baseline=float(np.mean(f(bg))),
        importance=importance,
        ranking=rank_importance(importance),
        instance_indices=take,
    )
