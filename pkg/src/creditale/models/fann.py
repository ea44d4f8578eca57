"""One-hidden-layer feedforward network trained by mini-batch gradient descent.

    P(y=1|x) = sigmoid(w1 . a(W0 z + b) + c),   z = (x - mean) / sd

with ``a`` the logistic sigmoid and the cross-entropy loss.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from ..dataset import Dataset
from ..errors import ConfigError, DataError, DivergenceError
from .base import FittedModel


@dataclass(frozen=True)
class FANNConfig:
    hidden_size: int = 16
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden_size < 1:
            raise ConfigError(f"hidden_size must be >= 1, got {self.hidden_size}")
        if self.learning_rate <= 0 or self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("learning_rate must be positive, epochs >= 0 and batch_size >= 1")


@dataclass
class Params:
    W0: np.ndarray  # (M, p)
    b: np.ndarray  # (M,)
    w1: np.ndarray  # (M,)
    c: float

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W0.ravel(), self.b, self.w1, [self.c]])

    @classmethod
    def unflat(cls, v: np.ndarray, M: int, p: int) -> "Params":
        k = M * p
        return cls(v[:k].reshape(M, p).copy(), v[k : k + M].copy(), v[k + M : k + 2 * M].copy(), float(v[-1]))


def init_params(p: int, M: int, rng: np.random.Generator) -> Params:
    r0 = 1.0 / np.sqrt(p)
    r1 = 1.0 / np.sqrt(M)
    return Params(
        rng.uniform(-r0, r0, (M, p)),
        rng.uniform(-r0, r0, M),
        rng.uniform(-r1, r1, M),
        float(rng.uniform(-r1, r1)),
    )


def forward(params: Params, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hidden activations and output logits."""
    A = special.expit(Z @ params.W0.T + params.b)
    return A, A @ params.w1 + params.c


def loss_and_grad(params: Params, Z: np.ndarray, y: np.ndarray) -> tuple[float, Params]:
    """Mean cross-entropy and its gradient by backpropagation."""
    A, logit = forward(params, Z)
    loss = float(np.mean(np.logaddexp(0.0, logit) - y * logit))
    delta = (special.expit(logit) - y) / len(y)
    dH = np.outer(delta, params.w1) * A * (1.0 - A)
    grad = Params(dH.T @ Z, dH.sum(axis=0), A.T @ delta, float(delta.sum()))
    return loss, grad


@dataclass(frozen=True)
class FeedforwardNet(FittedModel):
    input_mean: np.ndarray
    input_sd: np.ndarray
    W0: np.ndarray
    b: np.ndarray
    w1: np.ndarray
    c: float
    loss_trace: tuple[float, ...] = ()
    feature_names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    family = "fann"

    def __post_init__(self) -> None:
        for name in ("input_mean", "input_sd", "W0", "b", "w1"):
            arr = np.array(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite parameter {name}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_features(self) -> int:
        return self.input_mean.size

    @property
    def hidden_size(self) -> int:
        return self.b.size

    def params(self) -> Params:
        return Params(self.W0.copy(), self.b.copy(), self.w1.copy(), self.c)

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.input_mean) / self.input_sd

    def _predict(self, X: np.ndarray) -> np.ndarray:
        A = special.expit(self.standardize(X) @ self.W0.T + self.b)
        return special.expit(A @ self.w1 + self.c)

    def _params(self) -> dict:
        return {
            "input_mean": self.input_mean.tolist(),
            "input_sd": self.input_sd.tolist(),
            "W0": self.W0.tolist(),
            "b": self.b.tolist(),
            "w1": self.w1.tolist(),
            "c": self.c,
            "loss_trace": list(self.loss_trace),
        }

    @classmethod
    def from_params(cls, params: dict, feature_names: tuple[str, ...], meta: dict) -> "FeedforwardNet":
        return cls(
            np.array(params["input_mean"], dtype=float),
            np.array(params["input_sd"], dtype=float),
            np.array(params["W0"], dtype=float).reshape(len(params["b"]), -1),
            np.array(params["b"], dtype=float),
            np.array(params["w1"], dtype=float),
            float(params["c"]),
            tuple(params.get("loss_trace", ())),
            feature_names,
            meta,
        )


def fit_fann_arrays(
    X: np.ndarray, y: np.ndarray, config: FANNConfig = FANNConfig(), feature_names: tuple[str, ...] = ()
) -> FeedforwardNet:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.min() == y.max():
        raise DataError("both classes must be present")
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Z = (X - mean) / sd

    rng = np.random.default_rng(config.seed)
    params = init_params(p, config.hidden_size, rng)
    theta = params.flat()
    M, lr, bs = config.hidden_size, config.learning_rate, config.batch_size
    trace = []
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        for s in range(0, n, bs):
            idx = perm[s : s + bs]
            _, grad = loss_and_grad(Params.unflat(theta, M, p), Z[idx], y[idx])
            theta = theta - lr * grad.flat()
        loss, _ = loss_and_grad(Params.unflat(theta, M, p), Z, y)
        if not np.isfinite(loss) or not np.all(np.isfinite(theta)):
            raise DivergenceError(epoch)
        trace.append(loss)

    final = Params.unflat(theta, M, p)
    return FeedforwardNet(
        mean,
        sd,
        final.W0,
        final.b,
        final.w1,
        final.c,
        tuple(trace),
        tuple(feature_names) or tuple(f"x{j}" for j in range(p)),
        {"config": asdict(config)},
    )


def fit_fann(d: Dataset, config: FANNConfig = FANNConfig()) -> FeedforwardNet:
    model = fit_fann_arrays(d.features, d.labels, config, d.feature_names)
    model.meta["transform_flags"] = list(d.transform_flags)
    return model
