"""Static fusion rules and reference-set based DCS/DES competitors.

Every dynamic method is implemented once in batched form: it takes the pool's
outputs on ``M`` query rows, a :class:`ReferenceSet` and the ``(M, k)``
neighbor indices/distances of each query, builds an ``(M, K)`` weight matrix
and fuses with :func:`bpens.bpe.fuse`.  The per-row functions (``lca_select``
and friends) are thin wrappers around the batched ones.

Tie rules: nearest neighbors by lower reference index, rankings by lower pool
index, and tied "best" models are averaged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bpe import fuse
from .learners import nearest_indices

DEFAULT_K = 7
DEFAULT_P_A = 0.5
DEFAULT_P_B = 0.3
DEFAULT_MCB_THRESHOLD = 0.7

DF, Q, RE = "DF", "Q", "RE"
MEASURES = (DF, Q, RE)


class BaselineError(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceSet:
    """Labelled reference rows plus every pool member's (out-of-fold) output on them.

    ``fold`` records which fold held each row out when the outputs come from
    cross-fitting, and ``fit_sets[f]`` the rows (in the caller's training
    coordinates) that fold ``f``'s models were fitted on.  ``rows`` maps each
    reference row back to those coordinates.
    """

    X: np.ndarray
    y: np.ndarray
    outputs: np.ndarray  # (K, N, C)
    fold: np.ndarray | None = None
    fit_sets: tuple = ()
    rows: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        P = np.asarray(self.outputs, dtype=float)
        if P.ndim != 3 or P.shape[1] != X.shape[0] or y.shape != (X.shape[0],):
            raise BaselineError(
                f"inconsistent reference shapes: X {X.shape}, y {y.shape}, outputs {P.shape}"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "outputs", P)
        object.__setattr__(self, "_preds", np.argmax(P, axis=2))

    @property
    def n_models(self) -> int:
        return self.outputs.shape[0]

    @property
    def preds(self) -> np.ndarray:
        return self._preds

    @property
    def correct(self) -> np.ndarray:
        """``(K, N)`` mask: model ``k`` classifies reference row ``i`` correctly."""
        return self._preds == self.y[None, :]

    @property
    def accuracy(self) -> np.ndarray:
        return self.correct.mean(axis=1)


@dataclass(frozen=True)
class RoC:
    idx: np.ndarray
    dist: np.ndarray


def knn_batch(X_ref, Q_rows, k: int):
    """``(idx, dist)`` of shape ``(M, k)``; exact Euclidean, ascending, ties to lower index."""
    X_ref = np.asarray(X_ref, dtype=float)
    if not 1 <= k <= X_ref.shape[0]:
        raise BaselineError(f"k={k} must lie in [1, N_ref={X_ref.shape[0]}]")
    return nearest_indices(X_ref, np.atleast_2d(np.asarray(Q_rows, dtype=float)), k)


def knn_query(X_ref, x, k: int) -> RoC:
    idx, dist = knn_batch(X_ref, np.asarray(x, dtype=float)[None, :], k)
    return RoC(idx[0], dist[0])


# static rules ---------------------------------------------------------------


def single_best(screening_acc) -> int:
    """Index of the highest screening accuracy (first one on ties)."""
    acc = np.asarray(screening_acc, dtype=float)
    if acc.size == 0:
        raise BaselineError("screening accuracies are empty")
    return int(np.argmax(acc))


def simple_average(outputs) -> np.ndarray:
    K = np.asarray(outputs).shape[0]
    return fuse(outputs, np.full(K, 1.0 / K))


def median_average(outputs) -> np.ndarray:
    P = np.asarray(outputs, dtype=float)
    if P.ndim != 3 or P.shape[0] < 1:
        raise BaselineError(f"outputs must have shape (K, N, C), got {P.shape}")
    H = np.median(P, axis=0)
    return H / H.sum(axis=1, keepdims=True)


def static_weights(ref_acc) -> np.ndarray:
    acc = np.asarray(ref_acc, dtype=float)
    if np.any(acc < 0):
        raise BaselineError("reference accuracies must be non-negative")
    total = acc.sum()
    return np.full(acc.size, 1.0 / acc.size) if total == 0 else acc / total


def weighted_average(outputs, ref_acc) -> np.ndarray:
    return fuse(outputs, static_weights(ref_acc))


# helpers for the dynamic rules ---------------------------------------------


def _normalize_rows(S: np.ndarray) -> np.ndarray:
    """Row-normalize non-negative ``(M, K)`` scores; all-zero rows become uniform."""
    S = np.asarray(S, dtype=float)
    tot = S.sum(axis=1, keepdims=True)
    uniform = np.full_like(S, 1.0 / S.shape[1])
    safe = np.where(tot > 0, tot, 1.0)
    return np.where(tot > 0, S / safe, uniform)


def _argmax_average(score: np.ndarray) -> np.ndarray:
    """Equal weight on every model attaining the row maximum of ``(M, K)`` scores."""
    best = score == score.max(axis=1, keepdims=True)
    return best / best.sum(axis=1, keepdims=True)


def _roc_correct(ref: ReferenceSet, roc_idx) -> np.ndarray:
    return ref.correct[:, np.asarray(roc_idx, dtype=np.int64)]  # (K, M, k)


def _check(outputs_at_x, roc_idx):
    P = np.asarray(outputs_at_x, dtype=float)
    idx = np.atleast_2d(np.asarray(roc_idx, dtype=np.int64))
    if P.ndim != 3 or P.shape[1] != idx.shape[0]:
        raise BaselineError(f"outputs {P.shape} do not match {idx.shape[0]} regions of competence")
    if idx.shape[1] < 1:
        raise BaselineError("region of competence is empty")
    return P, idx


# LCA ------------------------------------------------------------------------


def lca_competence(ref: ReferenceSet, roc_idx, outputs_at_x) -> np.ndarray:
    """``(M, K)`` local class accuracy w.r.t. each model's predicted class at ``x``.

    Among the neighbors a model assigns to its predicted class ``c``, the
    fraction whose true label is ``c``; zero when it assigns none to ``c``.
    """
    P, idx = _check(outputs_at_x, roc_idx)
    c = np.argmax(P, axis=2)  # (K, M)
    assigned = ref.preds[:, idx] == c[:, :, None]  # (K, M, k)
    hits = assigned & (ref.y[idx][None, :, :] == c[:, :, None])
    n_assigned = assigned.sum(axis=2)
    comp = np.where(n_assigned > 0, hits.sum(axis=2) / np.maximum(n_assigned, 1), 0.0)
    return comp.T


def lca_batch(ref, roc_idx, outputs_at_x) -> np.ndarray:
    return fuse(outputs_at_x, _argmax_average(lca_competence(ref, roc_idx, outputs_at_x)))


# KNORA ----------------------------------------------------------------------


def knora_votes(ref: ReferenceSet, roc_idx) -> np.ndarray:
    idx = np.atleast_2d(np.asarray(roc_idx, dtype=np.int64))
    return _roc_correct(ref, idx).sum(axis=2).T  # (M, K)


def knora_u_batch(ref, roc_idx, outputs_at_x) -> np.ndarray:
    P, idx = _check(outputs_at_x, roc_idx)
    return fuse(P, _normalize_rows(knora_votes(ref, idx)))


def knora_e_members(ref: ReferenceSet, roc_idx) -> np.ndarray:
    """``(M, K)`` mask of E(k*), the models correct on all of the ``k*`` nearest neighbors.

    ``k*`` is the largest prefix length with a non-empty set; if even the
    nearest neighbor defeats every model, all models are returned.
    """
    idx = np.atleast_2d(np.asarray(roc_idx, dtype=np.int64))
    ok = np.logical_and.accumulate(_roc_correct(ref, idx), axis=2)  # (K, M, k)
    nonempty = ok.any(axis=0)  # (M, k)
    # prefixes shrink monotonically, so the count of non-empty prefixes is k*
    k_star = nonempty.sum(axis=1)
    M, K = idx.shape[0], ref.n_models
    members = np.ones((M, K), dtype=bool)
    rows = np.flatnonzero(k_star > 0)
    members[rows] = ok[:, rows, k_star[rows] - 1].T
    return members


def knora_e_batch(ref, roc_idx, outputs_at_x) -> np.ndarray:
    P, idx = _check(outputs_at_x, roc_idx)
    return fuse(P, _normalize_rows(knora_e_members(ref, idx)))


# MCB ------------------------------------------------------------------------


def mcb_filter(ref: ReferenceSet, roc_idx, outputs_at_x, threshold=DEFAULT_MCB_THRESHOLD):
    """``(M, k)`` mask of neighbors whose output profile agrees with ``x``'s on at
    least ``threshold`` of the models (falls back to all neighbors if none do)."""
    P, idx = _check(outputs_at_x, roc_idx)
    prof_x = np.argmax(P, axis=2)  # (K, M)
    agree = (ref.preds[:, idx] == prof_x[:, :, None]).mean(axis=0)  # (M, k)
    keep = agree >= threshold
    keep[~keep.any(axis=1)] = True
    return keep


def mcb_batch(ref, roc_idx, outputs_at_x, threshold=DEFAULT_MCB_THRESHOLD) -> np.ndarray:
    P, idx = _check(outputs_at_x, roc_idx)
    keep = mcb_filter(ref, idx, P, threshold)
    hits = (_roc_correct(ref, idx) & keep[None]).sum(axis=2)  # (K, M)
    acc = hits / keep.sum(axis=1)[None, :]
    return fuse(P, _argmax_average(acc.T))


# RRC ------------------------------------------------------------------------


def rrc_competence(ref: ReferenceSet, roc_idx, roc_dist) -> np.ndarray:
    """``(M, K)`` Gaussian-kernel weighted count of correctly classified neighbors.

    Bandwidth is the mean neighbor distance of the region (1 when that is 0).
    """
    idx = np.atleast_2d(np.asarray(roc_idx, dtype=np.int64))
    d = np.atleast_2d(np.asarray(roc_dist, dtype=float))
    h = d.mean(axis=1, keepdims=True)
    h = np.where(h > 0, h, 1.0)
    kern = np.exp(-(d**2) / (2.0 * h**2))  # (M, k)
    return (_roc_correct(ref, idx) * kern[None]).sum(axis=2).T


def rrc_batch(ref, roc_idx, roc_dist, outputs_at_x) -> np.ndarray:
    P, idx = _check(outputs_at_x, roc_idx)
    return fuse(P, _normalize_rows(rrc_competence(ref, idx, roc_dist)))


# DES-KNN --------------------------------------------------------------------


def pair_measure(ca: np.ndarray, cb: np.ndarray, measure: str) -> np.ndarray:
    """Pairwise agreement statistic from correctness masks over the last axis.

    DF is the both-wrong fraction, Q is Yule's Q, RE is both-wrong over
    at-least-one-wrong.  Degenerate denominators give the least diverse value
    (Q = RE = 1).  Larger means *less* diverse.
    """
    ca = np.asarray(ca, dtype=bool)
    cb = np.asarray(cb, dtype=bool)
    n11 = (ca & cb).sum(axis=-1).astype(float)
    n00 = (~ca & ~cb).sum(axis=-1).astype(float)
    n10 = (ca & ~cb).sum(axis=-1).astype(float)
    n01 = (~ca & cb).sum(axis=-1).astype(float)
    if measure == DF:
        return n00 / ca.shape[-1]
    if measure == Q:
        den = n11 * n00 + n01 * n10
        return np.where(den > 0, (n11 * n00 - n01 * n10) / np.where(den > 0, den, 1.0), 1.0)
    if measure == RE:
        den = n00 + n01 + n10
        return np.where(den > 0, n00 / np.where(den > 0, den, 1.0), 1.0)
    raise BaselineError(f"unknown diversity measure {measure!r}; expected one of {MEASURES}")


def diversity(ref: ReferenceSet, roc_idx, measure: str) -> np.ndarray:
    """``(M, K)`` mean negated pairwise measure against every other model."""
    idx = np.atleast_2d(np.asarray(roc_idx, dtype=np.int64))
    corr = _roc_correct(ref, idx)
    K = corr.shape[0]
    div = np.zeros((idx.shape[0], K))
    if K == 1:
        return div
    for a in range(K):
        for b in range(a + 1, K):
            m = -pair_measure(corr[a], corr[b], measure)
            div[:, a] += m
            div[:, b] += m
    return div / (K - 1)


def top_count(p: float, K: int) -> int:
    """``ceil(p * K)`` clamped to ``[1, K]``, immune to float noise like 0.3 * 10."""
    if not 0 < p <= 1:
        raise BaselineError(f"selection fraction must lie in (0, 1], got {p}")
    return min(K, max(1, math.ceil(p * K - 1e-9)))


def _top(score: np.ndarray, n: int) -> np.ndarray:
    # descending, ties to lower index
    order = np.argsort(-score, axis=1, kind="stable")[:, :n]
    mask = np.zeros(score.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    return mask


def des_knn_members(ref: ReferenceSet, roc_idx, measure: str = DF,
                    p_a: float = DEFAULT_P_A, p_b: float = DEFAULT_P_B) -> np.ndarray:
    """``(M, K)`` mask: most accurate ``ceil(p_a K)`` models plus most diverse ``ceil(p_b K)``."""
    idx = np.atleast_2d(np.asarray(roc_idx, dtype=np.int64))
    K = ref.n_models
    acc = _roc_correct(ref, idx).mean(axis=2).T
    div = diversity(ref, idx, measure)
    return _top(acc, top_count(p_a, K)) | _top(div, top_count(p_b, K))


def des_knn_batch(ref, roc_idx, outputs_at_x, measure=DF, p_a=DEFAULT_P_A, p_b=DEFAULT_P_B):
    P, idx = _check(outputs_at_x, roc_idx)
    return fuse(P, _normalize_rows(des_knn_members(ref, idx, measure, p_a, p_b)))


# per-row wrappers -------------------------------------------------------------


def _one(batch_fn, ref, roc: RoC, outputs_at_x, *args, with_dist=False):
    P = np.asarray(outputs_at_x, dtype=float)[:, None, :]
    idx = np.asarray(roc.idx)[None, :]
    if with_dist:
        return batch_fn(ref, idx, np.asarray(roc.dist)[None, :], P, *args)[0]
    return batch_fn(ref, idx, P, *args)[0]


def lca_select(ref, roc: RoC, outputs_at_x) -> np.ndarray:
    return _one(lca_batch, ref, roc, outputs_at_x)


def knora_union(ref, roc: RoC, outputs_at_x) -> np.ndarray:
    return _one(knora_u_batch, ref, roc, outputs_at_x)


def knora_eliminate(ref, roc: RoC, outputs_at_x) -> np.ndarray:
    return _one(knora_e_batch, ref, roc, outputs_at_x)


def mcb_select(ref, roc: RoC, outputs_at_x, threshold=DEFAULT_MCB_THRESHOLD) -> np.ndarray:
    return _one(mcb_batch, ref, roc, outputs_at_x, threshold)


def rrc_select(ref, roc: RoC, outputs_at_x) -> np.ndarray:
    return _one(rrc_batch, ref, roc, outputs_at_x, with_dist=True)


def rrc_weights(ref, roc: RoC) -> np.ndarray:
    comp = rrc_competence(ref, np.asarray(roc.idx)[None, :], np.asarray(roc.dist)[None, :])
    return _normalize_rows(comp)[0]


def des_knn(ref, roc: RoC, outputs_at_x, p_a=DEFAULT_P_A, p_b=DEFAULT_P_B, measure=DF):
    return _one(des_knn_batch, ref, roc, outputs_at_x, measure, p_a, p_b)
