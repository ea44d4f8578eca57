"""Sensitivity/specificity, AUC and the H-measure.

Class 1 (default) is the positive class; higher scores mean higher risk.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from scipy import special, stats

from .errors import ConfigError, DataError


class Counts(NamedTuple):
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass(frozen=True)
class MetricsReport:
    sensitivity: float
    specificity: float
    h_measure: float
    auc: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self) -> dict:
        return asdict(self)


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise DataError(f"length mismatch: {s.size} scores vs {y.size} labels")
    if s.size == 0:
        raise DataError("empty input")
    if not np.all(np.isfinite(s)):
        raise DataError("scores must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be 0 or 1")
    return s, y.astype(bool)


def _check_two_class(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s, y = _check(scores, labels)
    if y.all() or not y.any():
        raise DataError("both classes must be present")
    return s, y


def confusion(scores, labels, threshold: float = 0.5) -> Counts:
    """Confusion counts with 'positive' meaning ``score >= threshold``."""
    s, y = _check(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    return Counts(tp, fp, int(s.size) - tp - fp - fn, fn)


def sensitivity(c: Counts) -> float:
    return c.tp / (c.tp + c.fn) if c.tp + c.fn else float("nan")


def specificity(c: Counts) -> float:
    return c.tn / (c.tn + c.fp) if c.tn + c.fp else float("nan")


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with ties counted one half (midrank formulation)."""
    s, y = _check_two_class(scores, labels)
    n1 = int(y.sum())
    n0 = s.size - n1
    ranks = stats.rankdata(s)
    u = ranks[y].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def roc_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(FPR, TPR) for every distinct threshold, from (0, 0) up to (1, 1).

    Tied scores enter the positive prediction together, so tie groups never
    produce intermediate points.
    """
    s, y = _check_two_class(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(y)[last_of_group]
    fp = np.cumsum(~y)[last_of_group]
    n1, n0 = tp[-1], fp[-1]
    return np.r_[0.0, fp / n0], np.r_[0.0, tp / n1]


def roc_hull(fpr: np.ndarray, tpr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertices of the upper convex hull of an ROC curve (monotone chain)."""
    hull: list[tuple[float, float]] = []
    for pt in zip(fpr.tolist(), tpr.tolist()):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # drop the middle point unless it lies strictly above the chord
            if (x2 - x1) * (pt[1] - y1) - (y2 - y1) * (pt[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(pt)
    h = np.array(hull)
    return h[:, 0], h[:, 1]


def _beta_mass(lo, hi, a: float, b: float) -> np.ndarray:
    return special.betainc(a, b, hi) - special.betainc(a, b, lo)


def _beta_first_moment(lo, hi, a: float, b: float) -> np.ndarray:
    return a / (a + b) * (special.betainc(a + 1, b, hi) - special.betainc(a + 1, b, lo))


def h_measure(scores, labels, severity: tuple[float, float] = (2.0, 2.0)) -> float:
    """H-measure under a Beta(a, b) distribution of the normalized cost ``c``.

    For cost ``c`` the loss of operating point (FPR, TPR) is
    ``c*pi0*FPR + (1-c)*pi1*(1-TPR)``. Its minimum over the ROC hull is
    piecewise linear in ``c``, so the expected minimum loss is integrated in
    closed form with regularized incomplete beta functions.
    """
    a, b = map(float, severity)
    if not (a > 0 and b > 0 and np.isfinite(a) and np.isfinite(b)):
        raise ConfigError(f"Beta severity parameters must be positive, got {severity}")
    s, y = _check_two_class(scores, labels)
    pi1 = y.mean()
    pi0 = 1.0 - pi1
    F, T = roc_hull(*roc_points(s, y))

    dF, dT = np.diff(F), np.diff(T)
    # cost at which adjacent hull vertices tie; decreasing along the hull
    cuts = pi1 * dT / (pi1 * dT + pi0 * dF)
    upper = np.r_[1.0, cuts]
    lower = np.r_[cuts, 0.0]
    mass = _beta_mass(lower, upper, a, b)
    first = _beta_first_moment(lower, upper, a, b)
    loss = np.sum(pi0 * F * first + pi1 * (1.0 - T) * (mass - first))

    loss_max = pi0 * _beta_first_moment(0.0, pi1, a, b) + pi1 * (
        _beta_mass(pi1, 1.0, a, b) - _beta_first_moment(pi1, 1.0, a, b)
    )
    h = 1.0 - loss / loss_max
    return float(min(1.0, max(0.0, h)))


def class_prior_severity(labels) -> tuple[float, float]:
    """Beta(pi1 + 1, pi0 + 1), the alternative severity choice."""
    y = np.asarray(labels)
    pi1 = float(y.mean())
    return pi1 + 1.0, 1.0 - pi1 + 1.0


def evaluate(
    scores, labels, threshold: float = 0.5, severity: tuple[float, float] = (2.0, 2.0)
) -> MetricsReport:
    c = confusion(scores, labels, threshold)
    return MetricsReport(
        sensitivity=sensitivity(c),
        specificity=specificity(c),
        h_measure=h_measure(scores, labels, severity),
        auc=auc(scores, labels),
        threshold=float(threshold),
        tp=c.tp,
        fp=c.fp,
        tn=c.tn,
        fn=c.fn,
    )
