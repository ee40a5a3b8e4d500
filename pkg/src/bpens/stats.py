"""Accuracy, Friedman average ranks, Wilcoxon signed-rank and win-tie-loss counts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

DEFAULT_TIE_EPSILON = 1e-9
SIGNIFICANCE = 0.05
EXACT_MAX_N = 12
# one-sided standard normal quantiles for alpha = 0.10, 0.05, 0.01
SIGN_TEST_Z = {0.10: 1.2816, 0.05: 1.6449, 0.01: 2.3263}


class StatsError(ValueError):
    pass


def accuracy(pred, y) -> float:
    """Fraction of rows whose argmax equals ``y``; ``pred`` may also be a label vector."""
    pred = np.asarray(pred)
    y = np.asarray(y)
    labels = np.argmax(pred, axis=1) if pred.ndim == 2 else pred
    if labels.shape != y.shape:
        raise StatsError(f"prediction shape {pred.shape} does not match labels {y.shape}")
    if y.size == 0:
        raise StatsError("cannot score an empty prediction")
    return float(np.mean(labels == y))


@dataclass(frozen=True)
class ResultsMatrix:
    values: np.ndarray  # (datasets, methods)
    datasets: tuple[str, ...]
    methods: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.datasets), len(self.methods)):
            raise StatsError(f"matrix shape {v.shape} does not match the name lists")
        if not np.all(np.isfinite(v)):
            raise StatsError("results matrix has missing entries")
        if len(set(self.datasets)) != len(self.datasets) or len(set(self.methods)) != len(self.methods):
            raise StatsError("dataset and method names must be unique")
        object.__setattr__(self, "values", v)

    def column(self, method: str) -> np.ndarray:
        return self.values[:, self.methods.index(method)]


def friedman_ranks(m: ResultsMatrix) -> dict[str, float]:
    """Average rank per method (1 = best, ties share the mean rank)."""
    if len(m.methods) < 2 or len(m.datasets) < 1:
        raise StatsError("need at least 2 methods and 1 dataset")
    ranks = rankdata(-m.values, method="average", axis=1)
    return dict(zip(m.methods, ranks.mean(axis=0).tolist()))


@dataclass(frozen=True)
class WilcoxonOutcome:
    r_plus: float
    r_minus: float
    n_effective: int
    p_value: float
    exact: bool

    @property
    def rejected_at_005(self) -> bool:
        return self.p_value < SIGNIFICANCE


def _exact_p(doubled_ranks: np.ndarray, r_plus: float) -> float:
    # distribution of 2 * R+ over all 2^n sign patterns, by subset-sum counting
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    probs = counts / counts.sum()
    t = int(round(2 * r_plus))
    lower = probs[: t + 1].sum()
    upper = probs[t:].sum()
    return min(1.0, 2.0 * min(lower, upper))


def normal_p(r_plus: float, n: int, tie_term: float = 0.0) -> float:
    """Two-sided normal approximation with continuity correction.

    ``tie_term`` is ``sum(t**3 - t)`` over groups of tied absolute differences.
    """
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0
    if var <= 0:
        return 1.0
    z = max(abs(r_plus - mean) - 0.5, 0.0) / math.sqrt(var)
    return float(math.erfc(z / math.sqrt(2.0)))


def wilcoxon_signed_rank(a, b, exact_max_n: int = EXACT_MAX_N) -> WilcoxonOutcome:
    """Two-sided paired signed-rank test on ``a - b`` with zero differences dropped."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise StatsError(f"paired samples must be equal-length vectors, got {a.shape} and {b.shape}")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise StatsError("all paired differences are zero")
    ranks = rankdata(np.abs(d), method="average")
    r_plus = float(ranks[d > 0].sum())
    r_minus = float(ranks[d < 0].sum())
    if n <= exact_max_n:
        p = _exact_p(np.rint(2 * ranks).astype(np.int64), r_plus)
        return WilcoxonOutcome(r_plus, r_minus, n, p, True)
    _, t = np.unique(np.abs(d), return_counts=True)
    p = normal_p(r_plus, n, float(np.sum(t.astype(float) ** 3 - t)))
    return WilcoxonOutcome(r_plus, r_minus, n, p, False)


def critical_value(n: int, alpha: float) -> float:
    """Sign-test win count needed for significance: ``n/2 + z * sqrt(n) / 2``."""
    try:
        z = SIGN_TEST_Z[alpha]
    except KeyError:
        raise StatsError(f"no tabulated quantile for alpha={alpha}") from None
    return n / 2.0 + z * math.sqrt(n) / 2.0


@dataclass(frozen=True)
class WinTieLoss:
    wins: int
    ties: int
    losses: int
    critical: dict[float, float]

    @property
    def score(self) -> float:
        return self.wins + self.ties / 2.0

    @property
    def significant(self) -> dict[float, bool]:
        return {alpha: self.score > c for alpha, c in self.critical.items()}


def win_tie_loss(a: Sequence[float], b: Sequence[float],
                 tie_epsilon: float = DEFAULT_TIE_EPSILON) -> WinTieLoss:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise StatsError("win-tie-loss needs equal-length vectors")
    wins = int(np.sum(a - b > tie_epsilon))
    losses = int(np.sum(b - a > tie_epsilon))
    n = a.size
    return WinTieLoss(wins, n - wins - losses, losses,
                      {alpha: critical_value(n, alpha) for alpha in SIGN_TEST_Z})
