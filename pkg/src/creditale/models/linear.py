"""Binary regression with logit, probit and GEV links fitted by Newton-Raphson.

The GEV link models ``P(y=1|x) = exp(-(1 + xi*eta)**(-1/xi))`` with
``eta = b0 + b'x``; ``xi = 0`` is the Gumbel limit ``exp(-exp(-eta))``.
Coefficients are reported on the raw feature scale (intercept first).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from ..dataset import Dataset
from ..errors import ConfigError, ConvergenceError, DataError, SeparationError
from .base import FittedModel

logger = logging.getLogger(__name__)

LINKS = ("logit", "probit", "gev")
FAMILY_OF_LINK = {"logit": "lr", "probit": "probit", "gev": "gev"}
LINK_OF_FAMILY = {v: k for k, v in FAMILY_OF_LINK.items()}
XI_GRID = tuple(np.round(np.arange(-0.30, 0.3001, 0.05), 2).tolist())

_TINY = 1e-300


@dataclass(frozen=True)
class LinearConfig:
    xi: float | None = None
    xi_grid: tuple[float, ...] = XI_GRID
    max_iter: int = 100
    tol: float = 1e-8
    ridge: bool = True
    ridge_penalty: float = 1e-6
    coef_limit: float = 1e3
    validation_fraction: float = 0.3
    seed: int = 0


class Link:
    """Inverse link ``F``, its log forms and density for one link choice."""

    def __init__(self, name: str, xi: float = 0.0):
        if name not in LINKS:
            raise ConfigError(f"unknown link {name!r}")
        self.name = name
        self.xi = float(xi) if name == "gev" else 0.0

    def _gev_t(self, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``t = (1 + xi*eta)**(-1/xi)`` and the domain mask ``1 + xi*eta > 0``."""
        xi = self.xi
        if xi == 0.0:
            return np.exp(-eta), np.ones(eta.shape, dtype=bool)
        u = 1.0 + xi * eta
        ok = u > 0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t = np.where(ok, np.power(np.where(ok, u, 1.0), -1.0 / xi), np.inf if xi > 0 else 0.0)
        return t, ok

    def cdf(self, eta: np.ndarray) -> np.ndarray:
        if self.name == "logit":
            return special.expit(eta)
        if self.name == "probit":
            return special.ndtr(eta)
        t, _ = self._gev_t(eta)
        return np.exp(-t)

    def log_cdf_pair(self, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(log F, log(1 - F))`` evaluated without cancellation."""
        if self.name == "logit":
            return -np.logaddexp(0.0, -eta), -np.logaddexp(0.0, eta)
        if self.name == "probit":
            return special.log_ndtr(eta), special.log_ndtr(-eta)
        t, _ = self._gev_t(eta)
        with np.errstate(divide="ignore"):
            return -t, np.log(-np.expm1(-t))

    def pdf(self, eta: np.ndarray) -> np.ndarray:
        if self.name == "logit":
            F = special.expit(eta)
            return F * (1.0 - F)
        if self.name == "probit":
            return np.exp(-0.5 * eta**2) / np.sqrt(2.0 * np.pi)
        t, ok = self._gev_t(eta)
        u = np.where(ok, 1.0 + self.xi * eta, 1.0)
        with np.errstate(invalid="ignore", over="ignore"):
            f = np.where(ok, np.exp(-t) * t / u, 0.0)
        return np.nan_to_num(f, nan=0.0, posinf=0.0)

    def pdf_slope(self, eta: np.ndarray) -> np.ndarray:
        """Derivative of the density with respect to ``eta``."""
        f = self.pdf(eta)
        if self.name == "logit":
            return f * (1.0 - 2.0 * special.expit(eta))
        if self.name == "probit":
            return -eta * f
        t, ok = self._gev_t(eta)
        u = np.where(ok, 1.0 + self.xi * eta, 1.0)
        with np.errstate(invalid="ignore", over="ignore"):
            return np.nan_to_num(np.where(ok, f * (t - 1.0 - self.xi) / u, 0.0), nan=0.0, posinf=0.0, neginf=0.0)

    def inverse(self, p: float) -> float:
        """Linear predictor at which ``F`` equals ``p``."""
        if self.name == "logit":
            return float(special.logit(p))
        if self.name == "probit":
            return float(special.ndtri(p))
        if self.xi == 0.0:
            return float(-np.log(-np.log(p)))
        return float(((-np.log(p)) ** (-self.xi) - 1.0) / self.xi)

    def in_domain(self, eta: np.ndarray) -> bool:
        if self.name != "gev" or self.xi == 0.0:
            return True
        return bool(np.all(1.0 + self.xi * eta > 0))


def log_likelihood(link: Link, eta: np.ndarray, y: np.ndarray) -> float:
    logF, log1mF = link.log_cdf_pair(eta)
    return float(np.sum(np.where(y == 1, logF, log1mF)))


@dataclass(frozen=True)
class LinearBinaryModel(FittedModel):
    link: str
    coefficients: np.ndarray
    xi: float = 0.0
    iterations: int = 0
    log_likelihood: float = float("nan")
    converged: bool = True
    std_errors: np.ndarray | None = None
    feature_names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        beta = np.asarray(self.coefficients, dtype=float)
        if not np.all(np.isfinite(beta)):
            raise DataError("coefficients must be finite")
        beta.setflags(write=False)
        object.__setattr__(self, "coefficients", beta)
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"x{j}" for j in range(beta.size - 1)))

    @property
    def family(self) -> str:
        return FAMILY_OF_LINK[self.link]

    @property
    def n_features(self) -> int:
        return self.coefficients.size - 1

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def odds_ratios(self) -> np.ndarray:
        return np.exp(self.coefficients)

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        return self.coefficients[0] + X @ self.coefficients[1:]

    def _predict(self, X: np.ndarray) -> np.ndarray:
        return Link(self.link, self.xi).cdf(self.linear_predictor(X))

    def _params(self) -> dict:
        return {
            "link": self.link,
            "coefficients": self.coefficients.tolist(),
            "xi": self.xi,
            "iterations": self.iterations,
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "std_errors": None if self.std_errors is None else np.asarray(self.std_errors).tolist(),
        }

    @classmethod
    def from_params(cls, params: dict, feature_names: tuple[str, ...], meta: dict) -> "LinearBinaryModel":
        se = params.get("std_errors")
        return cls(
            link=params["link"],
            coefficients=np.array(params["coefficients"], dtype=float),
            xi=float(params.get("xi", 0.0)),
            iterations=int(params.get("iterations", 0)),
            log_likelihood=float(params.get("log_likelihood", float("nan"))),
            converged=bool(params.get("converged", True)),
            std_errors=None if se is None else np.array(se, dtype=float),
            feature_names=feature_names,
            meta=meta,
        )


def _separated(lk: Link, eta: np.ndarray, y: np.ndarray, tol: float = 1e-6) -> bool:
    return bool(np.all(np.abs(y - lk.cdf(eta)) < tol))


def fit_binary_glm(
    X: np.ndarray,
    y: np.ndarray,
    link: str = "logit",
    xi: float = 0.0,
    config: LinearConfig = LinearConfig(),
    feature_names: tuple[str, ...] = (),
) -> LinearBinaryModel:
    """Maximize the Bernoulli log-likelihood by Newton steps with step halving.

    ``X`` may have zero columns (intercept-only fit). Columns are
    standardized internally for conditioning; the returned coefficients are
    mapped back to the raw scale.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(float)
    n, p = X.shape
    if y.shape != (n,):
        raise DataError("labels do not match rows")
    if y.min() == y.max():
        raise DataError("both classes must be present")
    lk = Link(link, xi)

    center = X.mean(axis=0)
    scale = X.std(axis=0)
    if np.any(scale == 0):
        bad = [feature_names[j] if feature_names else str(j) for j in np.flatnonzero(scale == 0)]
        raise DataError(f"constant feature(s) duplicate the intercept: {', '.join(bad)}")
    Z = np.column_stack([np.ones(n), (X - center) / scale])

    gamma = np.zeros(p + 1)
    penalty = 0.0

    def objective(g: np.ndarray) -> float:
        eta = Z @ g
        if not lk.in_domain(eta):
            return -np.inf
        return log_likelihood(lk, eta, y) - 0.5 * penalty * float(g[1:] @ g[1:])

    ll = objective(gamma)
    history = [ll]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        eta = Z @ gamma
        F = np.clip(lk.cdf(eta), _TINY, 1.0 - 1e-16)
        f = lk.pdf(eta)
        v = F * (1.0 - F)
        resid = (y - F) / v
        grad = Z.T @ (resid * f)
        info = (Z * (f * f / v)[:, None]).T @ Z
        # observed information; Newton when positive definite, Fisher scoring otherwise
        with np.errstate(all="ignore"):
            curv = np.where(y > 0, (f / F) ** 2, (f / (1.0 - F)) ** 2) - resid * lk.pdf_slope(eta)
            observed = (Z * curv[:, None]).T @ Z
        ridge = np.zeros(p + 1)
        ridge[1:] = penalty
        grad[1:] -= penalty * gamma[1:]
        if not (np.all(np.isfinite(info)) and np.all(np.isfinite(grad))):
            raise ConvergenceError(f"{link} fit hit non-finite derivatives at iteration {it}")
        if np.all(np.isfinite(observed)):
            try:
                np.linalg.cholesky(observed + np.diag(ridge))
                info = observed
            except np.linalg.LinAlgError:
                pass
        try:
            if np.linalg.cond(info) > 1e12:
                raise np.linalg.LinAlgError("ill-conditioned information matrix")
            step = np.linalg.solve(info + np.diag(ridge), grad)
        except np.linalg.LinAlgError:
            if not config.ridge:
                raise SeparationError("singular information matrix (perfect separation?)") from None
            penalty = max(penalty, config.ridge_penalty)
            ll = objective(gamma)
            ridge[1:] = penalty
            step = np.linalg.lstsq(info + np.diag(ridge) + 1e-12 * np.eye(p + 1), grad, rcond=None)[0]

        t = 1.0
        for _ in range(50):
            cand = gamma + t * step
            ll_new = objective(cand)
            if ll_new >= ll:
                break
            t *= 0.5
        else:
            converged = True  # no ascent direction left at working precision
            break
        gamma, delta, ll = cand, ll_new - ll, ll_new
        history.append(ll)

        if np.max(np.abs(gamma[1:]), initial=0.0) > config.coef_limit:
            if not config.ridge:
                raise SeparationError("coefficients diverging: data look perfectly separated")
            if penalty == 0.0:
                penalty = config.ridge_penalty
                ll = objective(gamma)
                continue
        if abs(delta) < config.tol:
            if penalty == 0.0 and _separated(lk, Z @ gamma, y):
                # the likelihood flattens toward 0 as coefficients run off
                if not config.ridge:
                    raise SeparationError("fitted probabilities are all 0 or 1: data look perfectly separated")
                penalty = config.ridge_penalty
                ll = objective(gamma)
                continue
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"{link} fit did not converge in {config.max_iter} iterations")

    # raw-scale coefficients: eta = g0 + sum g_j (x_j - c_j) / s_j
    A = np.zeros((p + 1, p + 1))
    A[0, 0] = 1.0
    A[0, 1:] = -center / scale
    A[1:, 1:] = np.diag(1.0 / scale)
    beta = A @ gamma

    eta = Z @ gamma
    F = np.clip(lk.cdf(eta), _TINY, 1.0 - 1e-16)
    f = lk.pdf(eta)
    info = (Z * (f * f / (F * (1.0 - F)))[:, None]).T @ Z
    try:
        cov = A @ np.linalg.inv(info) @ A.T
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        se = np.full(p + 1, np.nan)

    if penalty:
        logger.info("%s fit used ridge fallback (penalty %g)", link, penalty)
    return LinearBinaryModel(
        link=link,
        coefficients=beta,
        xi=lk.xi,
        iterations=it,
        log_likelihood=log_likelihood(lk, eta, y),
        converged=True,
        std_errors=se,
        feature_names=tuple(feature_names) or tuple(f"x{j}" for j in range(p)),
        meta={"ridge_penalty": penalty, "objective_trace": history},
    )


def select_gev_xi(X: np.ndarray, y: np.ndarray, config: LinearConfig) -> tuple[float, list[tuple[float, float]]]:
    """Pick the GEV tail parameter by AUC on a seeded internal holdout."""
    from ..metrics import auc
    from ..resampling import holdout_indices

    train, val = holdout_indices(len(y), config.validation_fraction, config.seed)
    if len(np.unique(y[val])) < 2 or len(np.unique(y[train])) < 2:
        raise DataError("internal holdout for xi selection lacks one class")
    trace = []
    for xi in config.xi_grid:
        try:
            m = fit_binary_glm(X[train], y[train], "gev", xi, config)
            score = auc(m.predict_proba(X[val]), y[val])
        except (ConvergenceError, SeparationError):
            score = float("nan")
        trace.append((float(xi), score))
    valid = [(s, -i) for i, (_, s) in enumerate(trace) if np.isfinite(s)]
    if not valid:
        raise ConvergenceError("no GEV tail parameter produced a converged fit")
    best = trace[-max(valid)[1]][0]
    return best, trace


def fit_linear(d: Dataset, link: str = "logit", config: LinearConfig = LinearConfig()) -> LinearBinaryModel:
    X, y = d.features, d.labels
    xi = 0.0
    meta: dict = {}
    if link == "gev":
        if config.xi is None:
            xi, trace = select_gev_xi(X, y, config)
            meta["xi_trace"] = [{"xi": a, "auc": b} for a, b in trace]
        else:
            xi = config.xi
    elif link not in LINKS:
        raise ConfigError(f"unknown link {link!r}")
    model = fit_binary_glm(X, y, link, xi, config, d.feature_names)
    meta.update(model.meta)
    meta["transform_flags"] = list(d.transform_flags)
    return replace(model, meta=meta)
