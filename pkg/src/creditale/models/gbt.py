"""Second-order gradient boosting of regression trees on the logistic loss.

Each round fits one tree greedily: a node is split at the threshold that
maximizes

    gain = GL**2/(HL + l2) + GR**2/(HR + l2) - G**2/(H + l2)

where G and H are sums of loss gradients and Hessians over the node, and a
leaf gets weight ``-G/(H + l2)``. The ensemble margin is
``base_score + learning_rate * sum(tree outputs)``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from ..dataset import Dataset
from ..errors import ConfigError, DataError
from .base import FittedModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GBTConfig:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    l2: float = 1.0
    min_child_weight: float = 1.0
    base_score: float | None = None

    def __post_init__(self) -> None:
        if self.max_depth < 0:
            raise ConfigError(f"max_depth must be >= 0, got {self.max_depth}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(f"learning_rate must lie in (0, 1], got {self.learning_rate}")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be >= 0, got {self.l2}")
        if self.n_trees < 0 or self.min_child_weight < 0:
            raise ConfigError("n_trees and min_child_weight must be non-negative")


@dataclass(frozen=True)
class Tree:
    """Flat node arrays; leaves have ``feature == -1`` and point to themselves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def depth(self) -> int:
        def walk(i: int) -> int:
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(int(self.left[i])), walk(int(self.right[i])))

        return walk(0)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        for _ in range(self.depth):
            f = np.maximum(self.feature[node], 0)
            go_left = X[rows, f] < self.threshold[node]
            node = np.where(go_left, self.left[node], self.right[node])
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Leaf weight per row, built bottom-up with one comparison per split."""

        def value(i: int):
            if self.feature[i] < 0:
                return self.value[i]
            go_left = X[:, self.feature[i]] < self.threshold[i]
            return np.where(go_left, value(int(self.left[i])), value(int(self.right[i])))

        return np.broadcast_to(value(0), (X.shape[0],))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        return cls(
            np.array(doc["feature"], dtype=np.intp),
            np.array(doc["threshold"], dtype=float),
            np.array(doc["left"], dtype=np.intp),
            np.array(doc["right"], dtype=np.intp),
            np.array(doc["value"], dtype=float),
        )


class _TreeBuilder:
    def __init__(self, X: np.ndarray, order: np.ndarray, cfg: GBTConfig):
        self.X = X
        self.order = order  # per-feature argsort of X, shape (p, n)
        self.cfg = cfg
        self.nodes: list[list] = []

    def _leaf(self, G: float, H: float) -> int:
        i = len(self.nodes)
        self.nodes.append([-1, np.inf, i, i, -G / (H + self.cfg.l2)])
        return i

    def _best_split(self, mask: np.ndarray, g: np.ndarray, h: np.ndarray, G: float, H: float):
        lam, mcw = self.cfg.l2, self.cfg.min_child_weight
        parent = G * G / (H + lam)
        best = (-np.inf, -1, 0.0)
        for j in range(self.X.shape[1]):
            idx = self.order[j][mask[self.order[j]]]
            xs = self.X[idx, j]
            distinct = xs[1:] > xs[:-1]
            if not distinct.any():
                continue
            GL = np.cumsum(g[idx])[:-1]
            HL = np.cumsum(h[idx])[:-1]
            GR, HR = G - GL, H - HL
            ok = distinct & (HL >= mcw) & (HR >= mcw)
            if not ok.any():
                continue
            gain = np.where(ok, GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent, -np.inf)
            k = int(np.argmax(gain))
            if gain[k] > best[0]:
                best = (float(gain[k]), j, 0.5 * (xs[k] + xs[k + 1]))
        return best

    def build(self, mask: np.ndarray, g: np.ndarray, h: np.ndarray, depth: int) -> int:
        G = float(g[mask].sum())
        H = float(h[mask].sum())
        if depth >= self.cfg.max_depth or mask.sum() < 2:
            return self._leaf(G, H)
        gain, j, thr = self._best_split(mask, g, h, G, H)
        # zero-gain splits are kept: symmetric problems (XOR) only pay off one level down
        if j < 0 or gain < -1e-12 * (abs(G * G / (H + self.cfg.l2)) + 1.0):
            return self._leaf(G, H)
        i = len(self.nodes)
        self.nodes.append([j, thr, -1, -1, 0.0])
        go_left = self.X[:, j] < thr
        self.nodes[i][2] = self.build(mask & go_left, g, h, depth + 1)
        self.nodes[i][3] = self.build(mask & ~go_left, g, h, depth + 1)
        return i

    def tree(self) -> Tree:
        cols = list(zip(*self.nodes))
        return Tree(
            np.array(cols[0], dtype=np.intp),
            np.array(cols[1], dtype=float),
            np.array(cols[2], dtype=np.intp),
            np.array(cols[3], dtype=np.intp),
            np.array(cols[4], dtype=float),
        )


def logistic_loss(margin: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood of labels under ``sigmoid(margin)``."""
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


@dataclass(frozen=True)
class TreeEnsemble(FittedModel):
    trees: tuple[Tree, ...]
    learning_rate: float
    base_score: float
    n_features_in: int
    train_loss: tuple[float, ...] = ()
    feature_names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    family = "gbt"

    @property
    def n_features(self) -> int:
        return self.n_features_in

    def margin(self, X: np.ndarray) -> np.ndarray:
        Xf = np.asfortranarray(X)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(Xf)
        return self.base_score + self.learning_rate * total

    def _predict(self, X: np.ndarray) -> np.ndarray:
        return special.expit(self.margin(X))

    def _params(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
            "n_features": self.n_features_in,
            "train_loss": list(self.train_loss),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_params(cls, params: dict, feature_names: tuple[str, ...], meta: dict) -> "TreeEnsemble":
        return cls(
            trees=tuple(Tree.from_dict(t) for t in params["trees"]),
            learning_rate=float(params["learning_rate"]),
            base_score=float(params["base_score"]),
            n_features_in=int(params["n_features"]),
            train_loss=tuple(params.get("train_loss", ())),
            feature_names=feature_names,
            meta=meta,
        )


def fit_gbt_arrays(
    X: np.ndarray, y: np.ndarray, config: GBTConfig = GBTConfig(), feature_names: tuple[str, ...] = ()
) -> TreeEnsemble:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < 2:
        raise DataError("need at least two rows")
    if y.min() == y.max():
        raise DataError("both classes must be present")
    base = config.base_score
    if base is None:
        base = float(special.logit(y.mean()))
    eta = config.learning_rate
    order = np.argsort(X, axis=0, kind="mergesort").T.copy()
    Xf = np.asfortranarray(X)
    everything = np.ones(n, dtype=bool)

    margin = np.full(n, base)
    losses = [logistic_loss(margin, y)]
    trees: list[Tree] = []
    shrunk = 0
    for _ in range(config.n_trees):
        prob = special.expit(margin)
        g = prob - y
        h = prob * (1.0 - prob)
        builder = _TreeBuilder(X, order, config)
        builder.build(everything, g, h, 0)
        tree = builder.tree()
        step = tree.predict(Xf)
        # guard: back off the whole tree if the Newton step overshoots
        scale = 1.0
        new_loss = logistic_loss(margin + eta * step, y)
        while new_loss > losses[-1] and scale > 2.0**-30:
            scale *= 0.5
            new_loss = logistic_loss(margin + eta * scale * step, y)
        if new_loss > losses[-1]:
            scale, new_loss = 0.0, losses[-1]
        if scale != 1.0:
            shrunk += 1
            tree = Tree(tree.feature, tree.threshold, tree.left, tree.right, tree.value * scale)
            step = step * scale
        margin = margin + eta * step
        trees.append(tree)
        losses.append(new_loss)
    if shrunk:
        logger.debug("%d of %d trees were shrunk to keep the training loss monotone", shrunk, config.n_trees)
    return TreeEnsemble(
        trees=tuple(trees),
        learning_rate=eta,
        base_score=base,
        n_features_in=p,
        train_loss=tuple(losses),
        feature_names=tuple(feature_names) or tuple(f"x{j}" for j in range(p)),
        meta={"config": asdict(config), "shrunk_trees": shrunk},
    )


def fit_gbt(d: Dataset, config: GBTConfig = GBTConfig()) -> TreeEnsemble:
    model = fit_gbt_arrays(d.features, d.labels, config, d.feature_names)
    model.meta["transform_flags"] = list(d.transform_flags)
    return model
