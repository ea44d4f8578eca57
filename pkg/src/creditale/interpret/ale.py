"""Accumulated local effects with bootstrap bands, and centered partial dependence.

Bins are half-open intervals ``(z[k-1], z[k]]`` except the first, which is
closed, so a value tied with a boundary belongs to the lower bin.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..dataset import Dataset
from ..errors import ConfigError, DataError
from ..resampling import bootstrap_indices

logger = logging.getLogger(__name__)

Predictor = Callable[[np.ndarray], np.ndarray]


def as_predictor(model) -> Predictor:
    """Accept a fitted model or any callable mapping rows to predictions."""
    if hasattr(model, "predict_proba"):
        return model.predict_proba
    if callable(model):
        return model
    raise ConfigError(f"{model!r} is neither a fitted model nor a callable")


def _feature_index(d: Dataset, feature: int | str) -> int:
    if isinstance(feature, str):
        return d.index_of(feature)
    if not 0 <= feature < d.p:
        raise ConfigError(f"feature index {feature} out of range for p={d.p}")
    return int(feature)


@dataclass(frozen=True)
class ALECurve:
    feature: int
    feature_name: str
    boundaries: np.ndarray
    effects: np.ndarray
    counts: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    se: np.ndarray | None = None
    requested_bins: int = 0
    bins_reduced: bool = False
    log_scale: bool = False

    @property
    def K(self) -> int:
        return self.effects.size

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.boundaries[:-1] + self.boundaries[1:])

    def centering_residual(self) -> float:
        return float(np.sum(self.counts * self.effects) / np.sum(self.counts))

    def to_dict(self) -> dict:
        lo = self.lower if self.lower is not None else self.effects
        hi = self.upper if self.upper is not None else self.effects
        return {
            "feature": self.feature_name,
            "feature_index": self.feature,
            "log_scale": self.log_scale,
            "bins": self.K,
            "requested_bins": self.requested_bins,
            "bins_reduced": self.bins_reduced,
            "boundaries": self.boundaries.tolist(),
            "counts": self.counts.tolist(),
            "points": [
                {"x": float(x), "effect": float(e), "lo": float(a), "hi": float(b)}
                for x, e, a, b in zip(self.midpoints, self.effects, lo, hi)
            ],
        }


def quantile_boundaries(x: np.ndarray, K: int) -> np.ndarray:
    """Equal-count boundaries at empirical quantiles, duplicates removed.

    ``inverted_cdf`` picks observed values only, so ``z[0] = min(x)``,
    ``z[-1] = max(x)`` and each bin ``(z[k-1], z[k]]`` contains ``z[k]``.
    """
    z = np.quantile(x, np.linspace(0.0, 1.0, K + 1), method="inverted_cdf")
    z[0] = x.min()
    return np.unique(z)


def assign_bins(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Zero-based bin of each value for boundaries ``z`` (lowest bin closed)."""
    k = np.searchsorted(z, x, side="left")
    return np.clip(k, 1, z.size - 1) - 1


def _merge_empty(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    while z.size > 2:
        counts = np.bincount(assign_bins(x, z), minlength=z.size - 1)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            break
        k = int(empty[0])
        # fold empty bin k into its left neighbour by dropping their shared boundary
        z = np.delete(z, k if k > 0 else 1)
    return z


def _local_differences(f: Predictor, X: np.ndarray, j: int, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    bins = assign_bins(X[:, j], z)
    lo = np.array(X, copy=True)
    hi = np.array(X, copy=True)
    lo[:, j] = z[bins]
    hi[:, j] = z[bins + 1]
    pred = np.asarray(f(np.vstack([hi, lo])), dtype=float)
    n = X.shape[0]
    return bins, pred[:n] - pred[n:]


def _accumulate(local: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Centered per-bin ALE from per-bin local effects.

    The curve at a bin is the mean of the accumulated effect at its two
    boundaries; centering subtracts the count-weighted mean over bins.
    """
    acc = np.r_[0.0, np.cumsum(local)]
    mid = 0.5 * (acc[:-1] + acc[1:])
    total = counts.sum()
    return mid - np.sum(counts * mid) / total if total else mid


def _zero_curve(j: int, d: Dataset, x: np.ndarray, K: int) -> ALECurve:
    return ALECurve(
        feature=j,
        feature_name=d.feature_names[j],
        boundaries=np.array([x.min(), x.max()]),
        effects=np.zeros(1),
        counts=np.array([d.n]),
        requested_bins=K,
        bins_reduced=K > 1,
        log_scale=d.transform_flags[j],
    )


def ale_curve(
    model, d: Dataset, feature: int | str, K: int = 40, boundaries: Sequence[float] | None = None
) -> ALECurve:
    """First-order ALE of one feature.

    A constant feature yields a single zero-effect bin. When the data hold
    fewer distinct quantile boundaries than ``K`` the bin count drops and
    ``bins_reduced`` is set.
    """
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    j = _feature_index(d, feature)
    f = as_predictor(model)
    x = d.features[:, j]
    if x.min() == x.max():
        return _zero_curve(j, d, x, K)

    z = quantile_boundaries(x, K) if boundaries is None else np.asarray(boundaries, dtype=float)
    if z.size < 2 or np.any(np.diff(z) <= 0):
        raise ConfigError("boundaries must be strictly increasing with at least two values")
    z = _merge_empty(x, z)
    reduced = z.size - 1 < K
    if reduced:
        logger.warning("feature %s: %d bins requested, %d usable", d.feature_names[j], K, z.size - 1)

    bins, diff = _local_differences(f, d.features, j, z)
    counts = np.bincount(bins, minlength=z.size - 1)
    local = np.bincount(bins, weights=diff, minlength=z.size - 1) / counts
    return ALECurve(
        feature=j,
        feature_name=d.feature_names[j],
        boundaries=z,
        effects=_accumulate(local, counts),
        counts=counts,
        requested_bins=K,
        bins_reduced=reduced,
        log_scale=d.transform_flags[j],
    )


def ale_bootstrap(
    model,
    d: Dataset,
    feature: int | str,
    K: int = 40,
    replicates: int = 100,
    band: tuple[float, float] = (0.05, 0.95),
    seed: int = 0,
) -> ALECurve:
    """ALE point estimate with per-bin bootstrap quantile bands.

    Rows are resampled with replacement while the fitted model and the
    full-data bin grid stay fixed. Because each row's finite difference only
    depends on the row and the grid, replicates reuse one batch of model
    evaluations. A bin left empty by a replicate borrows the full-data local
    effect.
    """
    if replicates < 2:
        raise ConfigError(f"need at least 2 bootstrap replicates, got {replicates}")
    lo_q, hi_q = band
    if not 0.0 <= lo_q < hi_q <= 1.0:
        raise ConfigError(f"invalid band {band}")
    point = ale_curve(model, d, feature, K)
    if point.K == 1 and not np.any(point.effects):
        z = np.zeros(1)
        return _with_bands(point, z, z, z)

    f = as_predictor(model)
    bins, diff = _local_differences(f, d.features, point.feature, point.boundaries)
    nb = point.K
    full_local = np.bincount(bins, weights=diff, minlength=nb) / np.maximum(point.counts, 1)
    reps = np.empty((replicates, nb))
    for b, idx in enumerate(bootstrap_indices(d.n, replicates, seed)):
        cnt = np.bincount(bins[idx], minlength=nb)
        tot = np.bincount(bins[idx], weights=diff[idx], minlength=nb)
        local = np.where(cnt > 0, tot / np.maximum(cnt, 1), full_local)
        reps[b] = _accumulate(local, cnt)
    lower = np.minimum(np.quantile(reps, lo_q, axis=0), point.effects)
    upper = np.maximum(np.quantile(reps, hi_q, axis=0), point.effects)
    return _with_bands(point, lower, upper, reps.std(axis=0, ddof=1))


def _with_bands(point: ALECurve, lower, upper, se) -> ALECurve:
    from dataclasses import replace

    return replace(point, lower=np.asarray(lower), upper=np.asarray(upper), se=np.asarray(se))


@dataclass(frozen=True)
class PDCurve:
    feature: int
    feature_name: str
    grid: np.ndarray
    values: np.ndarray
    raw: np.ndarray
    se: np.ndarray
    weights: np.ndarray

    def to_dict(self) -> dict:
        return {
            "feature": self.feature_name,
            "points": [
                {"x": float(x), "effect": float(v), "se": float(s)}
                for x, v, s in zip(self.grid, self.values, self.se)
            ],
        }


def pd_curve(
    model, d: Dataset, feature: int | str, grid: Sequence[float], weights: Sequence[float] | None = None
) -> PDCurve:
    """Partial dependence on ``grid``, centered by its data-weighted mean.

    Without explicit ``weights`` each grid value is weighted by the number
    of observations nearest to it.
    """
    g = np.asarray(grid, dtype=float)
    if g.size == 0:
        raise ConfigError("grid must be nonempty")
    if np.any(np.diff(g) < 0):
        raise ConfigError("grid must be sorted")
    if d.n == 0:
        raise DataError("empty dataset")
    j = _feature_index(d, feature)
    f = as_predictor(model)
    X = d.features
    raw = np.empty(g.size)
    se = np.empty(g.size)
    for i, v in enumerate(g):
        Xv = np.array(X, copy=True)
        Xv[:, j] = v
        pred = np.asarray(f(Xv), dtype=float)
        raw[i] = pred.mean()
        se[i] = pred.std(ddof=1) / np.sqrt(d.n) if d.n > 1 else 0.0
    if weights is None:
        cuts = 0.5 * (g[1:] + g[:-1])
        w = np.bincount(np.searchsorted(cuts, X[:, j], side="left"), minlength=g.size).astype(float)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != g.shape or np.any(w < 0) or w.sum() <= 0:
            raise ConfigError("weights must be non-negative, match the grid and not all vanish")
    return PDCurve(j, d.feature_names[j], g, raw - np.sum(w * raw) / w.sum(), raw, se, w)
