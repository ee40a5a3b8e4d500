"""Behavioral Profiling Ensemble (entropy and margin variants).

Offline, each pool member is scored on a Gaussian-perturbed copy of the
training set and summarized by the mean and sample standard deviation of its
confidence scores.  Online, a member's confidence on the test point is turned
into a clipped z-score against its own profile, the z-scores go through a
softmax with sensitivity ``lam``, and the resulting per-instance weights fuse
the members' outputs.  Nothing but ``K`` scalar pairs is kept between the two
phases.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import xlogy

from .data import perturb
from .learners import TrainedPool

NEG_ENTROPY = "neg_entropy"
TOP_MARGIN = "top_margin"
SCORE_KINDS = (NEG_ENTROPY, TOP_MARGIN)

DEFAULT_LAMBDA = 1.0
DEFAULT_DELTA = 0.5
DEFAULT_XI = 1e-12
DEFAULT_CLIP = 5.0

PROB = "prob"
RANK = "rank"


class ProfileError(ValueError):
    pass


def score(p, kind: str = NEG_ENTROPY):
    """Confidence of probability row(s) ``p`` along the last axis.

    ``neg_entropy`` is ``sum_c p_c ln p_c`` (0 ln 0 taken as 0); ``top_margin``
    is the gap between the two largest entries.  Higher means sharper.
    """
    p = np.asarray(p, dtype=float)
    if kind == NEG_ENTROPY:
        return xlogy(p, p).sum(axis=-1)
    if kind == TOP_MARGIN:
        top2 = -np.partition(-p, 1, axis=-1)[..., :2]
        return top2[..., 0] - top2[..., 1]
    raise ProfileError(f"unknown score kind {kind!r}; expected one of {SCORE_KINDS}")


@dataclass(frozen=True)
class BehavioralProfile:
    model_id: str
    mu: float
    sigma: float
    score_kind: str = NEG_ENTROPY
    delta: float = DEFAULT_DELTA
    n: int = 0

    def __post_init__(self):
        if not np.isfinite(self.mu) or not self.sigma >= 0 or self.n < 2:
            raise ProfileError(
                f"invalid profile for {self.model_id!r}: mu={self.mu}, sigma={self.sigma}, n={self.n}"
            )


def profile_from_scores(scores, model_id: str = "", kind: str = NEG_ENTROPY, delta: float = 0.0):
    s = np.asarray(scores, dtype=float)
    if s.size < 2:
        raise ProfileError("profiling needs at least 2 samples")
    return BehavioralProfile(
        model_id=model_id,
        mu=float(s.mean()),
        sigma=float(s.std(ddof=1)),
        score_kind=kind,
        delta=float(delta),
        n=int(s.size),
    )


def build_profile(model, X_train, delta: float = DEFAULT_DELTA, seed: int = 0,
                  kind: str = NEG_ENTROPY, model_id: str = "") -> BehavioralProfile:
    """Profile one model on a perturbed copy of ``X_train``.

    ``X_train`` must already live in the model's input space (standardized
    features in this package), since that is where the noise scale is defined.
    """
    X_train = np.asarray(X_train, dtype=float)
    if X_train.shape[0] < 2:
        raise ProfileError("profiling needs at least 2 samples")
    Xp = perturb(X_train, delta, seed)
    return profile_from_scores(score(model.predict_proba(Xp), kind), model_id, kind, delta)


def build_profiles(pool: TrainedPool, X_train, delta: float = DEFAULT_DELTA, seed: int = 0,
                   kind: str = NEG_ENTROPY) -> list[BehavioralProfile]:
    """Profiles for every pool member, all scored on the same perturbed set."""
    X_train = np.asarray(X_train, dtype=float)
    if X_train.shape[0] < 2:
        raise ProfileError("profiling needs at least 2 samples")
    Xp = perturb(X_train, delta, seed)
    return [
        profile_from_scores(score(m.predict_proba(Xp), kind), mid, kind, delta)
        for m, mid in zip(pool.learners, pool.ids)
    ]


def z_score(s_test, profile, xi: float = DEFAULT_XI, clip: float = DEFAULT_CLIP, sigma=None):
    """``(s - mu) / (sigma + xi)`` clamped to ``[-clip, clip]``.

    ``profile`` is a :class:`BehavioralProfile` or, with ``sigma`` given, the mean.
    """
    if xi <= 0 or clip <= 0:
        raise ProfileError("xi and clip must be positive")
    if sigma is None:
        mu, sigma = profile.mu, profile.sigma
    else:
        mu = profile
    with np.errstate(over="ignore"):
        z = (np.asarray(s_test, dtype=float) - mu) / (np.asarray(sigma, dtype=float) + xi)
    return np.clip(z, -clip, clip)


def weights(z, lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    """Softmax of ``lam * z`` along the last axis (max-shifted)."""
    if lam < 0:
        raise ProfileError("lambda must be >= 0")
    a = lam * np.asarray(z, dtype=float)
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def rank_transform(P: np.ndarray) -> np.ndarray:
    """Borda scores per row: the lowest probability gets 0, the highest ``C - 1``.

    Tied probabilities share the mean of their positions.
    """
    from scipy.stats import rankdata

    return rankdata(np.asarray(P, dtype=float), method="average", axis=-1) - 1.0


def fuse(outputs, w, mode: str = PROB) -> np.ndarray:
    """Weighted combination of ``K`` output matrices.

    ``w`` is either a global ``(K,)`` vector or per-row ``(N, K)`` weights.
    Members are accumulated in pool order; probability results are
    renormalized per row, rank results are returned as raw scores.
    """
    P = np.asarray(outputs, dtype=float)
    if P.ndim != 3:
        raise ProfileError(f"outputs must have shape (K, N, C), got {P.shape}")
    K, N, _ = P.shape
    w = np.asarray(w, dtype=float)
    if w.shape not in ((K,), (N, K)):
        raise ProfileError(f"weights of shape {w.shape} do not match {K} members x {N} rows")
    if mode == RANK:
        P = rank_transform(P)
    elif mode != PROB:
        raise ProfileError(f"unknown fusion mode {mode!r}")
    col = (lambda k: w[k]) if w.ndim == 1 else (lambda k: w[:, k, None])
    H = col(0) * P[0]
    for k in range(1, K):
        H = H + col(k) * P[k]
    if mode == PROB:
        H = H / H.sum(axis=1, keepdims=True)
    return H


def _check_profiles(ids: Sequence[str], profiles: Sequence[BehavioralProfile]):
    got = [p.model_id for p in profiles]
    if list(ids) != got:
        raise ProfileError(f"profile ids {got} do not match pool ids {list(ids)}")
    kinds = {p.score_kind for p in profiles}
    if len(kinds) > 1:
        raise ProfileError(f"profiles mix score kinds {sorted(kinds)}")


def instance_weights(outputs, profiles: Sequence[BehavioralProfile], lam=DEFAULT_LAMBDA,
                     xi=DEFAULT_XI, clip=DEFAULT_CLIP) -> np.ndarray:
    """Per-row ``(N, K)`` weights from precomputed ``(K, N, C)`` outputs."""
    P = np.asarray(outputs, dtype=float)
    kind = profiles[0].score_kind
    S = score(P, kind)  # (K, N)
    mu = np.array([p.mu for p in profiles])[:, None]
    sigma = np.array([p.sigma for p in profiles])[:, None]
    z = z_score(S, mu, xi, clip, sigma=sigma)
    return weights(z.T, lam)


def combine(outputs, profiles: Sequence[BehavioralProfile], lam=DEFAULT_LAMBDA, xi=DEFAULT_XI,
            clip=DEFAULT_CLIP, mode: str = PROB) -> np.ndarray:
    return fuse(outputs, instance_weights(outputs, profiles, lam, xi, clip), mode)


def bpe_predict(pool: TrainedPool, profiles: Sequence[BehavioralProfile], X_test,
                lam: float = DEFAULT_LAMBDA, xi: float = DEFAULT_XI, clip: float = DEFAULT_CLIP,
                mode: str = PROB) -> np.ndarray:
    """Fused prediction for ``X_test``; the test points themselves are never perturbed."""
    _check_profiles(pool.ids, profiles)
    return combine(pool.predict_all(X_test), profiles, lam, xi, clip, mode)


class BPEEnsemble:
    """Convenience wrapper: profile a fitted pool once, then predict."""

    def __init__(self, lam=DEFAULT_LAMBDA, delta=DEFAULT_DELTA, xi=DEFAULT_XI,
                 clip=DEFAULT_CLIP, kind=NEG_ENTROPY, mode=PROB):
        self.lam, self.delta, self.xi, self.clip = lam, delta, xi, clip
        self.kind, self.mode = kind, mode

    def fit(self, pool: TrainedPool, X_train, seed: int = 0):
        self.pool_ = pool
        self.profiles_ = build_profiles(pool, X_train, self.delta, seed, self.kind)
        return self

    def predict_proba(self, X):
        return bpe_predict(self.pool_, self.profiles_, X, self.lam, self.xi, self.clip, self.mode)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


PROFILE_FIELDS = ("model_id", "score_kind", "mu", "sigma", "delta", "n")


def _fmt(x: float) -> str:
    # fixed width, 17 significant digits: exact float64 round trip
    return f"{x:+.16e}"


def save_profiles(path, profiles: Sequence[BehavioralProfile]) -> None:
    """Write one fixed-width record per model; sizes depend only on ``K`` and the ids."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_FIELDS)
        for p in profiles:
            if "," in p.model_id or "\n" in p.model_id:
                raise ProfileError(f"model id {p.model_id!r} cannot be stored")
            w.writerow([p.model_id, p.score_kind, _fmt(p.mu), _fmt(p.sigma), _fmt(p.delta),
                        f"{p.n:012d}"])


def load_profiles(path) -> list[BehavioralProfile]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != PROFILE_FIELDS:
            raise ProfileError(f"bad profile store header: {reader.fieldnames}")
        return [
            BehavioralProfile(
                model_id=r["model_id"],
                score_kind=r["score_kind"],
                mu=float(r["mu"]),
                sigma=float(r["sigma"]),
                delta=float(r["delta"]),
                n=int(r["n"]),
            )
            for r in reader
        ]
