"""Uniform probability-prediction surface shared by the five model families."""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, ClassVar

import numpy as np

from ..errors import ConfigError, DataError

SCHEMA_VERSION = 1


class FittedModel(ABC):
    """A trained binary classifier returning P(default | x).

    Subclasses are immutable after fitting; ``predict_proba`` never mutates
    state, so one instance can serve many threads.
    """

    family: ClassVar[str]
    feature_names: tuple[str, ...]
    meta: dict

    @property
    @abstractmethod
    def n_features(self) -> int: ...

    @abstractmethod
    def _predict(self, X: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _params(self) -> dict: ...

    def predict_proba(self, rows) -> np.ndarray:
        X = np.asarray(rows, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"expected rows of width {self.n_features}, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite input rows")
        return np.clip(self._predict(X), 0.0, 1.0)

    def __call__(self, rows) -> np.ndarray:
        return self.predict_proba(rows)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "family": self.family,
            "feature_names": list(self.feature_names),
            "meta": self.meta,
            "params": self._params(),
        }


def predict_proba(model: FittedModel, rows) -> np.ndarray:
    return model.predict_proba(rows)


def _registry() -> dict[str, Any]:
    from .fann import FeedforwardNet
    from .gbt import TreeEnsemble
    from .linear import LinearBinaryModel

    return {
        "lr": LinearBinaryModel,
        "probit": LinearBinaryModel,
        "gev": LinearBinaryModel,
        "gbt": TreeEnsemble,
        "fann": FeedforwardNet,
    }


def model_from_dict(doc: dict) -> FittedModel:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported model schema version {doc.get('schema_version')!r}")
    family = doc.get("family")
    cls = _registry().get(family)
    if cls is None:
        raise ConfigError(f"unknown model family {family!r}")
    return cls.from_params(doc["params"], tuple(doc["feature_names"]), dict(doc.get("meta", {})))


def save_model(model: FittedModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict(), indent=1))
    return path


def load_model(path: str | Path) -> FittedModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model file {path}: {exc}") from exc
    return model_from_dict(doc)
