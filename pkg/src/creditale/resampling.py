"""Monte Carlo cross-validation, majority undersampling and bootstrap draws.

Every random draw derives its generator from ``base_seed + i`` where ``i``
is a stable work-unit index, so iterations and replicates can be computed in
any order (or in parallel) and still reproduce bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class SplitPlan:
    iterations: int
    validation_fraction: float
    base_seed: int
    splits: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __iter__(self):
        return iter(self.splits)

    def __len__(self) -> int:
        return len(self.splits)


def holdout_indices(n: int, validation_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """One random (subtrain, validation) split drawn without replacement."""
    n_val = int(np.floor(n * validation_fraction))
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def mccv_splits(n: int, iterations: int = 30, validation_fraction: float = 0.3, base_seed: int = 0) -> SplitPlan:
    if iterations < 1:
        raise ConfigError(f"iterations must be >= 1, got {iterations}")
    if not 0.0 < validation_fraction < 1.0:
        raise ConfigError(f"validation_fraction must lie in (0, 1), got {validation_fraction}")
    n_val = int(np.floor(n * validation_fraction))
    if n_val < 1 or n - n_val < 1:
        raise DataError(f"n={n} too small for validation_fraction={validation_fraction}")
    splits = tuple(holdout_indices(n, validation_fraction, base_seed + i) for i in range(iterations))
    return SplitPlan(iterations, validation_fraction, base_seed, splits)


def undersample_indices(labels: np.ndarray, seed: int) -> np.ndarray:
    """Positions of a balanced sample: every minority row plus an equal-size
    without-replacement draw from the majority class, in shuffled order."""
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise DataError("undersampling needs both classes present")
    minority, majority = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    rng = np.random.default_rng(seed)
    keep = rng.choice(majority, size=len(minority), replace=False)
    return rng.permutation(np.concatenate([minority, keep]))


def undersample_majority(d: Dataset, seed: int = 0) -> Dataset:
    return d.subset(undersample_indices(d.labels, seed))


def bootstrap_indices(n: int, replicates: int, base_seed: int = 0) -> list[np.ndarray]:
    if n < 1 or replicates < 1:
        raise ConfigError(f"need n >= 1 and replicates >= 1, got n={n}, replicates={replicates}")
    return [np.random.default_rng(base_seed + b).integers(0, n, size=n) for b in range(replicates)]
