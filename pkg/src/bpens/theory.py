"""Two-model fusion theory as executable checks.

A primary model ``q`` and a secondary model ``q2`` are fused linearly as
``w * q + (1 - w) * q2``.  Writing ``tau = (1 - w) / w``, the fused prediction
on sample ``s`` moves from class ``i`` to ``j`` exactly when ``tau`` exceeds
the exchange threshold ``ET(s, i -> j)``.  The functions below partition a
sample set by which model is right, derive the feasible ``tau`` interval for a
single static weight, and provide a deliberately naive grid search that serves
as an independent oracle.

All argmaxes break ties toward the lowest class index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng

INF = float("inf")


class TheoryError(ValueError):
    pass


@dataclass(frozen=True)
class TwoModelInstance:
    q: np.ndarray
    q2: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        q2 = np.atleast_2d(np.asarray(self.q2, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=np.int64))
        if q.shape != q2.shape or q.shape[0] != y.shape[0]:
            raise TheoryError(f"shape mismatch: q {q.shape}, q2 {q2.shape}, y {y.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "q2", q2)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def fused(self, w: float) -> np.ndarray:
        return w * self.q + (1.0 - w) * self.q2


@dataclass(frozen=True)
class Partition:
    T: np.ndarray  # primary wrong, secondary right
    F: np.ndarray  # primary right, secondary wrong
    N: np.ndarray  # both right or both wrong


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    tau_interval: tuple[float, float] | None
    witness_w: float | None


def partition(inst: TwoModelInstance) -> Partition:
    pm = np.argmax(inst.q, axis=1) == inst.y
    sm = np.argmax(inst.q2, axis=1) == inst.y
    return Partition(
        T=np.flatnonzero(~pm & sm),
        F=np.flatnonzero(pm & ~sm),
        N=np.flatnonzero(pm == sm),
    )


def exchange_threshold(q_row, q2_row, i: int, j: int) -> float:
    """Smallest ``tau`` beyond which the fused score of ``j`` overtakes ``i``.

    ``+inf`` when the secondary model does not prefer ``j`` over ``i``.
    """
    if i == j:
        raise TheoryError("exchange threshold needs two distinct classes")
    gain = q2_row[j] - q2_row[i]
    if gain <= 0:
        return INF
    return float((q_row[i] - q_row[j]) / gain)


def w_from_tau(tau: float) -> float:
    return 1.0 / (1.0 + tau)


def tau_from_w(w: float) -> float:
    return (1.0 - w) / w


def _fixes_all(inst: TwoModelInstance, idx: np.ndarray, w: float) -> bool:
    if idx.size == 0:
        return True
    return bool(np.all(np.argmax(inst.fused(w)[idx], axis=1) == inst.y[idx]))


def static_feasibility(inst: TwoModelInstance, part: Partition | None = None,
                       n_scan: int = 64) -> FeasibilityResult:
    """Interval of ``tau`` for which one static weight is right on all of ``T`` and ``F``.

    ``lo`` is the largest correction threshold over ``T`` (primary argmax to
    the true class), ``hi`` the smallest preservation threshold over ``F``
    (true class to any other class).  A witness at the interval midpoint (or
    ``lo + 1`` when ``hi`` is infinite) is verified by direct evaluation; if it
    fails, which can only happen with several classes, ``n_scan`` interior
    points are tried before the instance is declared infeasible.
    """
    part = part or partition(inst)
    lo = 0.0
    for t in part.T:
        i = int(np.argmax(inst.q[t]))
        lo = max(lo, exchange_threshold(inst.q[t], inst.q2[t], i, int(inst.y[t])))
    hi = INF
    C = inst.q.shape[1]
    for f in part.F:
        k = int(inst.y[f])
        for j in range(C):
            if j != k:
                hi = min(hi, exchange_threshold(inst.q[f], inst.q2[f], k, j))
    if not lo < hi:
        return FeasibilityResult(False, None, None)
    targets = np.concatenate([part.T, part.F])
    tau = lo + 1.0 if hi == INF else 0.5 * (lo + hi)
    w = w_from_tau(tau)
    if _fixes_all(inst, targets, w):
        return FeasibilityResult(True, (lo, hi), w)
    top = hi if hi < INF else lo + 2.0
    for tau in np.linspace(lo, top, n_scan + 2)[1:-1]:
        w = w_from_tau(float(tau))
        if _fixes_all(inst, targets, w):
            return FeasibilityResult(True, (lo, hi), w)
    return FeasibilityResult(False, None, None)


def discriminative_margin(p_row, k: int) -> float:
    """True-class probability minus the best competing class."""
    p = np.asarray(p_row, dtype=float)
    return float(p[k] - np.max(np.delete(p, k)))


def ensemble_margin(margins, w) -> float:
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise TheoryError("weights must be non-negative")
    return float(np.dot(w, np.asarray(margins, dtype=float)))


def simplex_grid(K: int, resolution: int) -> np.ndarray:
    """All weight vectors with entries in ``{0, 1/r, ..., 1}`` summing to one,
    in ascending lexicographic order."""
    rows = [
        c + (resolution - sum(c),)
        for c in itertools.product(range(resolution + 1), repeat=K - 1)
        if sum(c) <= resolution
    ]
    return np.array(rows, dtype=float).reshape(-1, K) / resolution


def best_static_accuracy(outputs, y, grid_resolution: int = 100, chunk: int = 2048):
    """Exhaustive search of the static-weight simplex; ``(accuracy, weights)``.

    Returns the first (lexicographically smallest) maximizer.  Fused scores are
    plain weighted sums, accumulated model by model.
    """
    P = np.asarray(outputs, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if P.ndim != 3:
        raise TheoryError(f"outputs must have shape (K, N, C), got {P.shape}")
    K = P.shape[0]
    if K > 3:
        raise TheoryError("exhaustive grid search supports at most 3 models")
    if grid_resolution < 2:
        raise TheoryError("grid_resolution must be >= 2")
    W = simplex_grid(K, grid_resolution)
    counts = np.empty(W.shape[0], dtype=np.int64)
    for s in range(0, W.shape[0], chunk):
        Wc = W[s : s + chunk]
        H = Wc[:, 0, None, None] * P[0]
        for k in range(1, K):
            H = H + Wc[:, k, None, None] * P[k]
        counts[s : s + chunk] = (np.argmax(H, axis=2) == y).sum(axis=1)
    b = int(np.argmax(counts))
    return counts[b] / y.size, W[b]


def target_accuracy(inst: TwoModelInstance, grid_resolution: int = 1000):
    """Best static accuracy restricted to ``T`` and ``F`` (1.0 when both are empty)."""
    part = partition(inst)
    idx = np.concatenate([part.T, part.F])
    if idx.size == 0:
        return 1.0, np.array([0.5, 0.5])
    return best_static_accuracy(np.stack([inst.q[idx], inst.q2[idx]]), inst.y[idx], grid_resolution)


# randomized instance generators ----------------------------------------------


def _binary_rows(margin: np.ndarray) -> np.ndarray:
    m = np.asarray(margin, dtype=float)
    return np.stack([(1.0 + m) / 2.0, (1.0 - m) / 2.0], axis=-1)


def random_binary_instance(rng: np.random.Generator, resolution: int = 1000,
                           n_cross: int | None = None, n_plain: int | None = None):
    """Binary instance whose ``T``/``F`` decision weights sit half a grid step off the grid.

    Each crossing sample changes prediction at ``w* = (m + 1/2) / resolution``
    for a distinct ``m``, so any non-empty feasible ``w`` interval contains a
    grid point and an empty one is detected exactly by the grid.
    """
    n_cross = int(rng.integers(1, 7)) if n_cross is None else n_cross
    n_plain = int(rng.integers(0, 4)) if n_plain is None else n_plain
    ms = rng.choice(resolution, size=n_cross, replace=False)
    a_list, b_list, y_list = [], [], []
    for m in ms:
        ws = (m + 0.5) / resolution
        r = rng.uniform(0.05, 1.0)
        a = rng.choice([-1.0, 1.0]) * r * min(1.0, (1.0 - ws) / ws)
        b = -a * ws / (1.0 - ws)
        a_list.append(a)
        b_list.append(b)
        # correct class is whichever the secondary model or the primary backs
        backs_secondary = rng.random() < 0.5
        side = b if backs_secondary else a
        y_list.append(0 if side > 0 else 1)
    for _ in range(n_plain):
        a = rng.uniform(-1, 1)
        b = np.sign(a) * rng.uniform(0.01, 1)
        a_list.append(a)
        b_list.append(b)
        y_list.append(int(rng.integers(0, 2)))
    return TwoModelInstance(_binary_rows(np.array(a_list)), _binary_rows(np.array(b_list)),
                            np.array(y_list))


def random_prob_rows(rng: np.random.Generator, n: int, C: int) -> np.ndarray:
    return rng.dirichlet(np.ones(C), size=n)


def improve_margins(outputs, y, rng: np.random.Generator) -> np.ndarray:
    """Move a random fraction of every wrong-class probability onto the true class."""
    P = np.array(outputs, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    K, N, C = P.shape
    frac = rng.uniform(0.0, 1.0, size=(K, N, 1))
    true = np.zeros((N, C), dtype=bool)
    true[np.arange(N), y] = True
    moved = np.where(true, 0.0, P * frac)
    out = np.where(true, P, P - moved)
    out[:, np.arange(N), y] += moved.sum(axis=2)
    return out


def three_model_fixture():
    """Three binary models, two samples of class 0, margins chosen so that no
    convex weighting is right on both."""
    margins = np.array([[-0.2, 0.4], [0.4, -0.9], [0.1, -0.3]])  # (model, sample)
    return _binary_rows(margins), np.array([0, 0])


# property suites (shared by the tests and the verify-theory command) ---------


@dataclass
class SuiteResult:
    name: str
    trials: int
    violations: int


def check_exchange_flip(seed: int, trials: int) -> SuiteResult:
    """Fused flip away from the primary argmax iff ``ET < tau``."""
    rng = make_rng(seed, "exchange_flip")
    bad = 0
    for _ in range(trials):
        q = random_prob_rows(rng, 1, 2)[0]
        q2 = random_prob_rows(rng, 1, 2)[0]
        w = float(rng.uniform(0.001, 0.999))
        i = int(np.argmax(q))
        j = 1 - i
        flipped = int(np.argmax(w * q + (1 - w) * q2)) == j
        predicted = exchange_threshold(q, q2, i, j) < tau_from_w(w)
        bad += int(flipped != predicted)
    return SuiteResult("flip iff ET < tau", trials, bad)


def check_static_feasibility(seed: int, trials: int, resolution: int = 1000) -> SuiteResult:
    """Interval verdict agrees with the exhaustive grid on T and F."""
    rng = make_rng(seed, "static_feasibility")
    bad = 0
    for _ in range(trials):
        inst = random_binary_instance(rng, resolution)
        res = static_feasibility(inst)
        acc, _ = target_accuracy(inst, resolution)
        grid_ok = acc == 1.0
        if res.feasible != grid_ok:
            bad += 1
        elif res.feasible:
            part = partition(inst)
            bad += int(not _fixes_all(inst, np.concatenate([part.T, part.F]), res.witness_w))
    return SuiteResult("static feasibility vs grid", trials, bad)


def check_margin_monotonicity(seed: int, trials: int, resolution: int = 40) -> SuiteResult:
    """Improving every model's margin never lowers the best static accuracy."""
    rng = make_rng(seed, "margin_monotonicity")
    bad = 0
    for _ in range(trials):
        K = int(rng.integers(1, 4))
        N = int(rng.integers(1, 51))
        C = int(rng.integers(2, 5))
        P = rng.dirichlet(np.ones(C), size=(K, N))
        y = rng.integers(0, C, size=N)
        before, _ = best_static_accuracy(P, y, resolution)
        after, _ = best_static_accuracy(improve_margins(P, y, rng), y, resolution)
        bad += int(after < before)
    return SuiteResult("margin improvement monotone", trials, bad)


def check_three_model_fixture(resolution: int = 300) -> SuiteResult:
    P, y = three_model_fixture()
    acc, _ = best_static_accuracy(P, y, resolution)
    return SuiteResult("three-model infeasible fixture", 1, int(acc == 1.0))


def run_suites(seed: int, trials: int) -> list[SuiteResult]:
    return [
        check_exchange_flip(seed, trials),
        check_static_feasibility(seed, trials),
        check_margin_monotonicity(seed, trials),
        check_three_model_fixture(),
        check_partition(seed, trials),
    ]


def check_partition(seed: int, trials: int) -> SuiteResult:
    rng = make_rng(seed, "partition")
    bad = 0
    for _ in range(trials):
        n, C = int(rng.integers(1, 20)), int(rng.integers(2, 5))
        inst = TwoModelInstance(random_prob_rows(rng, n, C), random_prob_rows(rng, n, C),
                                rng.integers(0, C, size=n))
        p = partition(inst)
        allidx = np.concatenate([p.T, p.F, p.N])
        bad += int(not (allidx.size == n and np.unique(allidx).size == n))
    return SuiteResult("partition covers all samples", trials, bad)
