"""Firm-level accounting data: loading, log transforms, splitting and synthesis."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

FEATURES: tuple[str, ...] = (
    "cash_flow",
    "gearing_ratio",
    "employees",
    "profit_margin",
    "roce",
    "roe",
    "sales",
    "solvency_ratio",
    "total_assets",
)
STATUS_COLUMN = "status"
SIZE_FEATURES: tuple[str, ...] = ("sales", "total_assets", "employees")

DISPLAY_NAMES = {
    "cash_flow": "Cash flow",
    "gearing_ratio": "Gearing ratio",
    "employees": "Number of employees",
    "profit_margin": "Profit margin",
    "roce": "ROCE",
    "roe": "ROE",
    "sales": "Sales",
    "solvency_ratio": "Solvency ratio",
    "total_assets": "Total assets",
}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, 0/1 default labels and per-column metadata.

    Arrays are copied and made read-only on construction, so a Dataset can be
    shared between threads without defensive copies.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    transform_flags: tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        n, p = X.shape
        names = tuple(self.feature_names)
        if n < 1 or p < 1:
            raise DataError(f"dataset must have n >= 1 and p >= 1, got {X.shape}")
        if y.shape != (n,):
            raise DataError(f"labels shape {y.shape} does not match n={n}")
        if len(names) != p:
            raise DataError(f"{len(names)} feature names for {p} columns")
        if len(set(names)) != p:
            raise DataError("feature names must be unique")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite values")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("invalid label: labels must be 0 or 1")
        flags = tuple(bool(f) for f in self.transform_flags) or (False,) * p
        if len(flags) != p:
            raise DataError(f"{len(flags)} transform flags for {p} columns")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y.astype(np.int8)))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "transform_flags", flags)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def index_of(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise ConfigError(f"unknown feature name {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.features[:, self.index_of(name)]

    def subset(self, indices: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.features[idx], self.labels[idx], self.feature_names, self.transform_flags)

    def class_counts(self) -> tuple[int, int]:
        """(survived, failed) counts."""
        failed = int(self.labels.sum())
        return self.n - failed, failed

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(json.dumps(self.feature_names).encode())
        h.update(np.ascontiguousarray(self.features, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="i1").tobytes())
        return h.hexdigest()

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.features, columns=list(self.feature_names))
        frame[STATUS_COLUMN] = self.labels.astype(int)
        return frame


class LoadResult(NamedTuple):
    dataset: Dataset
    dropped: int


def _parse_numeric(col: pd.Series, decimal: str, thousands: str | None) -> pd.Series:
    s = col.astype("string").str.strip()
    if thousands:
        s = s.str.replace(thousands, "", regex=False)
    if decimal != ".":
        s = s.str.replace(decimal, ".", regex=False)
    # float() rounds correctly; pd.to_numeric's fast path can be off by an ulp
    return s.map(_to_float, na_action="ignore").astype(float)


def _to_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return np.nan


def load_csv(
    path: str | Path,
    schema: Sequence[str] = FEATURES,
    *,
    status_column: str = STATUS_COLUMN,
    decimal: str = ".",
    thousands: str | None = None,
) -> LoadResult:
    """Read a firm table and apply listwise deletion on the schema columns.

    ``decimal``/``thousands`` allow ingesting comma-decimal exports
    (``decimal=",", thousands="."``); values are normalized to floats.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    raw.columns = [c.strip() for c in raw.columns]
    missing = [c for c in (*schema, status_column) if c not in raw.columns]
    if missing:
        raise DataError(f"missing required column(s): {', '.join(missing)}")

    values = pd.DataFrame({c: _parse_numeric(raw[c], decimal, thousands) for c in schema})
    finite = np.isfinite(values.to_numpy(dtype=float)).all(axis=1)
    status = _parse_numeric(raw[status_column], ".", None)
    bad = ~status.isin([0, 1])
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(f"invalid label {raw[status_column].iloc[row]!r} in row {row + 1}")

    dropped = int((~finite).sum())
    if dropped:
        logger.info("dropped %d row(s) with missing or non-numeric values", dropped)
    if not finite.any():
        raise DataError(f"no usable rows in {path}")
    ds = Dataset(
        values.to_numpy(dtype=float)[finite],
        status.to_numpy()[finite].astype(np.int8),
        tuple(schema),
    )
    return LoadResult(ds, dropped)


def write_csv(d: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # pandas writes float64 with repr precision, so a reload is exact
    d.to_frame().to_csv(path, index=False)
    return path


def apply_log_transform(d: Dataset, targets: Iterable[str]) -> Dataset:
    """Replace each target column by ``ln(max(x, 0) + 1)``."""
    targets = list(targets)
    if not targets:
        return d
    X = np.array(d.features, copy=True)
    flags = list(d.transform_flags)
    for name in targets:
        j = d.index_of(name)
        if flags[j]:
            raise DataError(f"feature {name!r} is already log-transformed")
        X[:, j] = np.log1p(np.clip(X[:, j], 0.0, None))
        flags[j] = True
    return Dataset(X, d.labels, d.feature_names, tuple(flags))


def split_indices(n: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(np.floor(n * train_fraction))
    if n_train < 1 or n - n_train < 1:
        raise DataError(f"n={n} too small for train_fraction={train_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split_train_test(d: Dataset, train_fraction: float = 0.7, seed: int = 0) -> tuple[Dataset, Dataset]:
    train, test = split_indices(d.n, train_fraction, seed)
    return d.subset(train), d.subset(test)


# --------------------------------------------------------------------------
# class-conditional moments and the synthetic generator


@dataclass(frozen=True)
class ClassMoments:
    """Per-class mean and standard deviation for every feature."""

    feature_names: tuple[str, ...]
    survived_mean: np.ndarray
    survived_sd: np.ndarray
    failed_mean: np.ndarray
    failed_sd: np.ndarray
    default_rate: float

    def __post_init__(self) -> None:
        p = len(self.feature_names)
        for name in ("survived_mean", "survived_sd", "failed_mean", "failed_sd"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (p,):
                raise ConfigError(f"{name} must have length {p}")
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} contains non-finite values")
            object.__setattr__(self, name, _frozen(arr))
        if np.any(self.survived_sd < 0) or np.any(self.failed_sd < 0):
            raise ConfigError("standard deviations must be non-negative")
        if not 0.0 < self.default_rate < 1.0:
            raise ConfigError(f"default_rate must lie in (0, 1), got {self.default_rate}")
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def moments(self, failed: bool) -> tuple[np.ndarray, np.ndarray]:
        return (self.failed_mean, self.failed_sd) if failed else (self.survived_mean, self.survived_sd)

    def to_dict(self) -> dict:
        return {
            "default_rate": self.default_rate,
            "features": {
                name: {
                    "survived": {"mean": float(self.survived_mean[j]), "sd": float(self.survived_sd[j])},
                    "failed": {"mean": float(self.failed_mean[j]), "sd": float(self.failed_sd[j])},
                }
                for j, name in enumerate(self.feature_names)
            },
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ClassMoments":
        try:
            feats = doc["features"]
            names = tuple(feats)
            return cls(
                names,
                np.array([feats[f]["survived"]["mean"] for f in names], dtype=float),
                np.array([feats[f]["survived"]["sd"] for f in names], dtype=float),
                np.array([feats[f]["failed"]["mean"] for f in names], dtype=float),
                np.array([feats[f]["failed"]["sd"] for f in names], dtype=float),
                float(doc["default_rate"]),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed moments document: {exc}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "ClassMoments":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read moments file {path}: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def from_dataset(cls, d: Dataset) -> "ClassMoments":
        surv = d.features[d.labels == 0]
        fail = d.features[d.labels == 1]
        if len(surv) < 2 or len(fail) < 2:
            raise DataError("need at least two rows per class to estimate moments")
        return cls(
            d.feature_names,
            surv.mean(axis=0),
            surv.std(axis=0, ddof=1),
            fail.mean(axis=0),
            fail.std(axis=0, ddof=1),
            float(d.labels.mean()),
        )


# Summary statistics by status for 2016 Italian manufacturing SMEs
# (published with comma decimals; converted here).
REFERENCE_MOMENTS = ClassMoments(
    FEATURES,
    survived_mean=np.array([236.802, 24.807, 16.506, -2.736, 12.335, 23.02, 3427.163, 27.101, 3904.129]),
    survived_sd=np.array([934.877, 23.093, 24.385, 610.488, 516.765, 314.135, 6301.229, 24.315, 12098.09]),
    failed_mean=np.array([-278.521, 22.166, 11.08, -106.845, 66.367, 7.146, 1259.695, -1.044, 1921.689]),
    failed_sd=np.array([1636.028, 26.01, 19.531, 2190.012, 2284.001, 971.112, 2940.01, 37.342, 5149.559]),
    default_rate=0.0172,
)


@dataclass(frozen=True)
class LabelMechanism:
    """Shape choices that give the synthetic classes learnable structure.

    ``step_feature`` gets a sign-asymmetric core: a value is positive with
    probability ``step_positive_share[status]`` and its magnitude is drawn
    from a half-normal shared by both classes, so the class log-likelihood
    ratio jumps at exactly zero. A wide Gaussian component with weight
    ``step_tail_weight`` carries the remaining mass needed to hit the target
    mean and standard deviation.
    """

    step_feature: str = "profit_margin"
    step_positive_share: tuple[float, float] = (0.92, 0.12)
    step_core_scale: float = 10.0
    step_tail_weight: float = 0.05
    lognormal_features: tuple[str, ...] = ("gearing_ratio", "employees", "sales", "total_assets")
    correlated_features: tuple[str, ...] = SIZE_FEATURES
    correlation: float = 0.6

    def __post_init__(self) -> None:
        if not all(0.0 <= s <= 1.0 for s in self.step_positive_share):
            raise ConfigError("step_positive_share entries must lie in [0, 1]")
        if not 0.0 < self.step_tail_weight < 1.0:
            raise ConfigError("step_tail_weight must lie in (0, 1)")
        if self.step_core_scale <= 0:
            raise ConfigError("step_core_scale must be positive")
        k = len(self.correlated_features)
        if k > 1 and not -1.0 / (k - 1) < self.correlation < 1.0:
            raise ConfigError("correlation does not give a positive-definite matrix")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "LabelMechanism":
        kw = dict(doc)
        for key in ("step_positive_share", "lognormal_features", "correlated_features"):
            if key in kw:
                kw[key] = tuple(kw[key])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(f"bad mechanism config: {exc}") from exc


def _step_mixture(
    rng: np.random.Generator, n: int, mean: float, sd: float, share: float, mech: LabelMechanism
) -> np.ndarray | None:
    b, q = mech.step_core_scale, mech.step_tail_weight
    core_mean = (2 * share - 1) * b * np.sqrt(2 / np.pi)
    tail_mean = (mean - (1 - q) * core_mean) / q
    tail_var = (sd**2 + mean**2 - (1 - q) * b**2) / q - tail_mean**2
    if tail_var <= 0:
        return None
    is_tail = rng.random(n) < q
    sign = np.where(rng.random(n) < share, 1.0, -1.0)
    core = sign * np.abs(rng.normal(0.0, b, n))
    tail = rng.normal(tail_mean, np.sqrt(tail_var), n)
    x = np.where(is_tail, tail, core)
    # exact sample mean, absorbed by the tail rows so the step at 0 stays put
    k = int(is_tail.sum())
    if k:
        x[is_tail] += n * (mean - x.mean()) / k
    return x


def _class_block(
    rng: np.random.Generator,
    n: int,
    names: Sequence[str],
    mean: np.ndarray,
    sd: np.ndarray,
    share: float,
    mech: LabelMechanism,
) -> np.ndarray:
    X = np.empty((n, len(names)))
    corr = [j for j, f in enumerate(names) if f in mech.correlated_features and f in mech.lognormal_features]
    if corr:
        R = np.full((len(corr), len(corr)), mech.correlation)
        np.fill_diagonal(R, 1.0)
        Z = rng.multivariate_normal(np.zeros(len(corr)), R, size=n, method="cholesky")
    latent = {j: Z[:, i] for i, j in enumerate(corr)}
    for j, name in enumerate(names):
        mu, sigma = float(mean[j]), float(sd[j])
        if sigma == 0.0 or n == 0:
            X[:, j] = mu
            continue
        if name in mech.lognormal_features and mu > 0:
            s2 = np.log1p((sigma / mu) ** 2)
            z = latent[j] if j in latent else rng.standard_normal(n)
            col = np.exp(np.log(mu) - s2 / 2 + np.sqrt(s2) * z)
            X[:, j] = col * (mu / col.mean())
            continue
        if name == mech.step_feature:
            col = _step_mixture(rng, n, mu, sigma, share, mech)
            if col is not None:
                X[:, j] = col
                continue
        col = rng.standard_normal(n)
        if n > 1:
            col = (col - col.mean()) / col.std(ddof=1)
        X[:, j] = mu + sigma * col
    return X


def synthesize_firms(
    m: ClassMoments = REFERENCE_MOMENTS,
    n: int = 100_000,
    seed: int = 0,
    mechanism: LabelMechanism | None = None,
) -> Dataset:
    """Draw a synthetic firm table calibrated to class-conditional moments.

    Labels are Bernoulli(``m.default_rate``). Features are then drawn per
    class; every class-conditional sample mean equals its target exactly,
    Gaussian columns also match the target standard deviation exactly.
    """
    if n < 100:
        raise ConfigError(f"n must be at least 100, got {n}")
    mech = mechanism or LabelMechanism()
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < m.default_rate).astype(np.int8)
    X = np.empty((n, len(m.feature_names)))
    for status in (0, 1):
        rows = y == status
        mean, sd = m.moments(bool(status))
        X[rows] = _class_block(
            rng, int(rows.sum()), m.feature_names, mean, sd, mech.step_positive_share[status], mech
        )
    return Dataset(X, y, m.feature_names)
