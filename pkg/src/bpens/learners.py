"""Probabilistic base classifiers and pool construction.

Four learner families are implemented from scratch on numpy: an unlimited-depth
CART tree (gini), Gaussian naive Bayes, L2-regularized multinomial logistic
regression and uniform k-nearest-neighbours.  All share the same contract:
``fit(X, y, n_classes)`` then ``predict_proba(X)``, which returns a row-stochastic
matrix whose entries are floored at ``PROB_FLOOR`` and renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from ._rng import derive_seed, make_rng

PROB_FLOOR = 1e-15

KINDS = ("decision_tree", "gaussian_nb", "logistic_regression", "knn")

DEFAULT_PARAMS: dict[str, dict] = {
    "decision_tree": {"criterion": "gini", "max_depth": None, "min_leaf": 1},
    "gaussian_nb": {"var_smoothing": 1e-9},
    "logistic_regression": {"max_iter": 1000, "C": 1.0},
    "knn": {"n_neighbors": 5},
}


class LearnerError(ValueError):
    pass


def clip_probs(P: np.ndarray) -> np.ndarray:
    """Floor entries at ``PROB_FLOOR`` and renormalize each row to sum 1."""
    P = np.clip(np.asarray(P, dtype=float), PROB_FLOOR, 1.0)
    return P / P.sum(axis=1, keepdims=True)


def check_prob_matrix(P: np.ndarray, atol: float = 1e-9) -> None:
    P = np.asarray(P)
    if P.ndim != 2:
        raise ValueError("probability matrix must be 2-D")
    if not np.all(np.isfinite(P)):
        raise ValueError("probability matrix has non-finite entries")
    if P.size and (P.min() < 0.0 or P.max() > 1.0):
        raise ValueError("probability entries outside [0, 1]")
    if P.size and np.max(np.abs(P.sum(axis=1) - 1.0)) > atol:
        raise ValueError("probability rows do not sum to 1")


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    params: tuple[tuple[str, object], ...] = ()

    @classmethod
    def make(cls, kind: str, **overrides) -> "LearnerSpec":
        if kind not in DEFAULT_PARAMS:
            raise LearnerError(f"unknown learner kind {kind!r}; expected one of {KINDS}")
        params = dict(DEFAULT_PARAMS[kind])
        unknown = set(overrides) - set(params)
        if unknown:
            raise LearnerError(f"unknown hyperparameters for {kind}: {sorted(unknown)}")
        params.update(overrides)
        spec = cls(kind, tuple(sorted(params.items())))
        spec.validate()
        return spec

    def param(self, key: str):
        return dict(self.params)[key]

    def validate(self) -> None:
        p = dict(self.params)
        if self.kind == "decision_tree":
            if p["criterion"] != "gini":
                raise LearnerError("only the gini criterion is supported")
            if p["max_depth"] is not None and p["max_depth"] < 1:
                raise LearnerError("max_depth must be None or >= 1")
            if p["min_leaf"] < 1:
                raise LearnerError("min_leaf must be >= 1")
        elif self.kind == "gaussian_nb":
            if p["var_smoothing"] < 0:
                raise LearnerError("var_smoothing must be >= 0")
        elif self.kind == "logistic_regression":
            if p["C"] <= 0 or p["max_iter"] < 1:
                raise LearnerError("logistic regression needs C > 0 and max_iter >= 1")
        elif self.kind == "knn":
            if p["n_neighbors"] < 1:
                raise LearnerError("n_neighbors must be >= 1")


class Classifier:
    n_classes: int
    n_features: int

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise LearnerError(
                f"dimension mismatch: model expects {self.n_features} features, got {X.shape}"
            )
        return clip_probs(self._proba(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def _proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class DecisionTree(Classifier):
    """CART with gini impurity.

    Nodes split while impure and while some feature takes two distinct values;
    a zero-gain split is still taken, so consistent data is always memorized.
    Split ties go to the lowest feature index, then the lowest threshold.
    """

    def __init__(self, max_depth: int | None = None, min_leaf: int = 1):
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def fit(self, X, y, n_classes):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        self.n_classes = n_classes
        self.n_features = X.shape[1]
        onehot = np.eye(n_classes)[y]

        feature, threshold, left, right, value = [], [], [], [], []

        def new_node(idx):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            counts = onehot[idx].sum(axis=0)
            value.append(counts / counts.sum())
            return len(feature) - 1

        stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            if np.count_nonzero(value[node]) <= 1:
                continue
            if self.max_depth is not None and depth >= self.max_depth:
                continue
            split = self._best_split(X[idx], onehot[idx])
            if split is None:
                continue
            f, thr = split
            go_left = X[idx, f] <= thr
            li, ri = idx[go_left], idx[~go_left]
            feature[node], threshold[node] = f, thr
            left[node], right[node] = new_node(li), new_node(ri)
            stack.append((right[node], ri, depth + 1))
            stack.append((left[node], li, depth + 1))

        self.feature_ = np.array(feature, dtype=np.int64)
        self.threshold_ = np.array(threshold)
        self.left_ = np.array(left, dtype=np.int64)
        self.right_ = np.array(right, dtype=np.int64)
        self.value_ = np.array(value)
        return self

    def _best_split(self, X, Y):
        n = X.shape[0]
        order = np.argsort(X, axis=0, kind="stable")
        xs = np.take_along_axis(X, order, axis=0)
        # left class counts after each prefix, shape (n - 1, D, C)
        cum = np.cumsum(Y[order], axis=0)[:-1]
        total = Y.sum(axis=0)
        n_left = np.arange(1, n)[:, None]
        n_right = n - n_left
        right = total - cum
        # n_child * gini(child) summed over both children
        imp = (n_left - (cum**2).sum(axis=2) / n_left) + (
            n_right - (right**2).sum(axis=2) / n_right
        )
        valid = xs[1:] > xs[:-1]
        if self.min_leaf > 1:
            valid &= (n_left >= self.min_leaf) & (n_right >= self.min_leaf)
        if not valid.any():
            return None
        imp = np.where(valid, imp, np.inf)
        best = imp.min()
        # transpose so the first hit is the lowest feature, then the lowest threshold
        pos, f = np.argwhere((imp <= best + 1e-12).T)[0][::-1]
        lo, hi = xs[pos, f], xs[pos + 1, f]
        thr = lo + (hi - lo) / 2.0
        if not thr < hi:
            thr = lo
        return int(f), float(thr)

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature_[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature_[nd]] <= self.threshold_[nd]
            node[active] = np.where(go_left, self.left_[nd], self.right_[nd])
            active = active[self.feature_[node[active]] >= 0]
        return node

    def _proba(self, X):
        return self.value_[self.apply(X)]


class GaussianNB(Classifier):
    def __init__(self, var_smoothing: float = 1e-9):
        self.var_smoothing = var_smoothing

    def fit(self, X, y, n_classes):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        self.n_classes = n_classes
        self.n_features = X.shape[1]
        max_var = float(X.var(axis=0).max()) if X.size else 0.0
        eps = self.var_smoothing * (max_var if max_var > 0 else 1.0)
        self.theta_ = np.zeros((n_classes, self.n_features))
        self.var_ = np.ones((n_classes, self.n_features))
        counts = np.bincount(y, minlength=n_classes).astype(float)
        for c in np.flatnonzero(counts):
            Xc = X[y == c]
            self.theta_[c] = Xc.mean(axis=0)
            self.var_[c] = Xc.var(axis=0) + eps
        with np.errstate(divide="ignore"):
            self.log_prior_ = np.log(counts / counts.sum())
        return self

    def _proba(self, X):
        jll = np.empty((X.shape[0], self.n_classes))
        for c in range(self.n_classes):
            jll[:, c] = self.log_prior_[c] - 0.5 * np.sum(
                np.log(2.0 * np.pi * self.var_[c]) + (X - self.theta_[c]) ** 2 / self.var_[c],
                axis=1,
            )
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))


class LogisticRegression(Classifier):
    """Multinomial logistic regression, L2 penalty ``||W||^2 / (2C)`` on the summed loss.

    Fitted with L-BFGS from a zero start, capped at ``max_iter`` iterations;
    intercepts are not penalized.
    """

    def __init__(self, C: float = 1.0, max_iter: int = 1000):
        self.C = C
        self.max_iter = max_iter

    def fit(self, X, y, n_classes):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        n, d = X.shape
        k = n_classes
        self.n_classes = k
        self.n_features = d
        Y = np.eye(k)[y]
        reg = 1.0 / (self.C * n)

        def loss_grad(theta):
            W = theta[: d * k].reshape(d, k)
            b = theta[d * k :]
            Z = X @ W + b
            logP = Z - logsumexp(Z, axis=1, keepdims=True)
            loss = -np.sum(Y * logP) / n + 0.5 * reg * np.sum(W * W)
            R = (np.exp(logP) - Y) / n
            gW = X.T @ R + reg * W
            return loss, np.concatenate([gW.ravel(), R.sum(axis=0)])

        res = minimize(
            loss_grad,
            np.zeros(d * k + k),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": self.max_iter, "gtol": 1e-10, "ftol": 1e-15},
        )
        self.coef_ = res.x[: d * k].reshape(d, k)
        self.intercept_ = res.x[d * k :]
        self.n_iter_ = res.nit
        return self

    def decision_function(self, X):
        return X @ self.coef_ + self.intercept_

    def _proba(self, X):
        Z = self.decision_function(X)
        return np.exp(Z - logsumexp(Z, axis=1, keepdims=True))


def pairwise_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Exact Euclidean distances, computed from explicit differences."""
    diff = A[:, None, :] - B[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def nearest_indices(X_ref: np.ndarray, Q: np.ndarray, k: int, budget: int = 4_000_000):
    """Indices and distances of the ``k`` nearest reference rows for each query row.

    Ties in distance go to the lower reference index.
    """
    X_ref = np.asarray(X_ref, dtype=float)
    Q = np.asarray(Q, dtype=float)
    idx = np.empty((Q.shape[0], k), dtype=np.int64)
    dist = np.empty((Q.shape[0], k))
    # bound the (chunk, N_ref, D) difference tensor to ~budget floats
    step = max(1, budget // max(1, X_ref.shape[0] * max(1, X_ref.shape[1])))
    for s in range(0, Q.shape[0], step):
        D = pairwise_distances(Q[s : s + step], X_ref)
        order = np.argsort(D, axis=1, kind="stable")[:, :k]
        idx[s : s + step] = order
        dist[s : s + step] = np.take_along_axis(D, order, axis=1)
    return idx, dist


class KNearestNeighbors(Classifier):
    """Uniform-vote kNN; ``k`` is clamped to the training size."""

    def __init__(self, n_neighbors: int = 5):
        self.n_neighbors = n_neighbors

    def fit(self, X, y, n_classes):
        self.X_ = np.array(X, dtype=float)
        self.y_ = np.asarray(y, dtype=np.int64)
        self.n_classes = n_classes
        self.n_features = self.X_.shape[1]
        self.k_ = min(self.n_neighbors, self.X_.shape[0])
        return self

    def _proba(self, X):
        idx, _ = nearest_indices(self.X_, X, self.k_)
        votes = self.y_[idx]
        P = np.zeros((X.shape[0], self.n_classes))
        for c in range(self.n_classes):
            P[:, c] = np.count_nonzero(votes == c, axis=1)
        return P / self.k_


def _build(spec: LearnerSpec) -> Classifier:
    p = dict(spec.params)
    if spec.kind == "decision_tree":
        return DecisionTree(max_depth=p["max_depth"], min_leaf=p["min_leaf"])
    if spec.kind == "gaussian_nb":
        return GaussianNB(var_smoothing=p["var_smoothing"])
    if spec.kind == "logistic_regression":
        return LogisticRegression(C=p["C"], max_iter=p["max_iter"])
    if spec.kind == "knn":
        return KNearestNeighbors(n_neighbors=p["n_neighbors"])
    raise LearnerError(f"unknown learner kind {spec.kind!r}")


def fit(spec: LearnerSpec, X, y, seed: int = 0, n_classes: int | None = None) -> Classifier:
    """Fit a fresh classifier described by ``spec``.

    ``n_classes`` defaults to ``max(y) + 1``; pass it explicitly when ``y`` may
    be missing classes (bootstrap resamples, folds).  The in-scope learners are
    deterministic, so ``seed`` only pins the contract.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise LearnerError(f"X has shape {X.shape} but y has {y.shape[0]} labels")
    if n_classes is None:
        n_classes = int(y.max()) + 1 if y.size else 0
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise LearnerError("labels outside [0, n_classes)")
    if y.size < 2 or np.unique(y).size < 2:
        raise LearnerError("degenerate training set: need >= 2 samples and >= 2 classes")
    return _build(spec).fit(X, y, n_classes)


@dataclass(frozen=True)
class MemberSpec:
    """One pool slot: a learner spec, a stable id and an optional bootstrap seed."""

    id: str
    spec: LearnerSpec
    bootstrap_seed: int | None = None


def fit_member(member: MemberSpec, X, y, n_classes: int, seed: int = 0) -> Classifier:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if member.bootstrap_seed is not None:
        idx = make_rng(member.bootstrap_seed, "bootstrap").integers(0, len(y), size=len(y))
        X, y = X[idx], y[idx]
    return fit(member.spec, X, y, seed=seed, n_classes=n_classes)


@dataclass(frozen=True)
class TrainedPool:
    learners: tuple[Classifier, ...]
    ids: tuple[str, ...]
    members: tuple[MemberSpec, ...]
    screening_acc: np.ndarray | None = None

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise LearnerError("pool ids must be unique")
        shapes = {(m.n_features, m.n_classes) for m in self.learners}
        if len(shapes) > 1:
            raise LearnerError(f"pool members disagree on (D, C): {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.learners)

    @property
    def n_classes(self) -> int:
        return self.learners[0].n_classes

    def predict_all(self, X) -> np.ndarray:
        """Stacked ``(K, N, C)`` probability outputs."""
        return np.stack([m.predict_proba(X) for m in self.learners])


def fit_pool(members: Sequence[MemberSpec], X, y, n_classes: int, screening_acc=None) -> TrainedPool:
    learners = tuple(fit_member(m, X, y, n_classes) for m in members)
    acc = None if screening_acc is None else np.asarray(screening_acc, dtype=float)
    return TrainedPool(learners, tuple(m.id for m in members), tuple(members), acc)


def heterogeneous_members(kinds: Sequence[str] = KINDS) -> list[MemberSpec]:
    return [MemberSpec(kind, LearnerSpec.make(kind)) for kind in kinds]


def bagging_members(spec: LearnerSpec, M: int, seed: int) -> list[MemberSpec]:
    if M < 1:
        raise LearnerError("bag size must be >= 1")
    return [MemberSpec(f"bag-{m:03d}", spec, derive_seed(seed, "bag", m)) for m in range(M)]


def bag(spec: LearnerSpec, X, y, M: int, seed: int, n_classes: int | None = None) -> TrainedPool:
    """``M`` copies of ``spec``, each fitted on its own bootstrap resample."""
    y = np.asarray(y, dtype=np.int64)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    return fit_pool(bagging_members(spec, M, seed), X, y, n_classes)
