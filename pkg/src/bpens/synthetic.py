"""Synthetic benchmark with region-specialized experts.

Samples fall into ``R`` regions laid out as disjoint intervals of a location
feature ``u``.  Inside region ``r`` only signal feature ``x_r`` is spread out and
the label is its sign; the other signal features are low-variance noise.  Pool
member ``r`` is fitted on region ``r``'s training rows only, so it is the
competent model there and guesses elsewhere.  Learner kinds rotate over the
members to make the pool heterogeneous.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import baselines as B
from . import bpe
from ._rng import derive_seed, make_rng
from .data import Scaler, stratified_split
from .learners import LearnerSpec, MemberSpec, TrainedPool, fit
from .stats import accuracy

EXPERT_KINDS = ("decision_tree", "logistic_regression", "gaussian_nb")
LAMBDA_GRID = (0.5, 0.7, 1.0, 1.2, 1.5)


@dataclass(frozen=True)
class RegionDatasetSpec:
    seed: int
    n_regions: int
    n_extra: int  # pure-noise features
    n_samples: int
    label_noise: float
    noise_sd: float
    signal_sd: float = 1.5


BENCHMARK = (
    RegionDatasetSpec(seed=1, n_regions=3, n_extra=0, n_samples=1500, label_noise=0.0, noise_sd=0.5),
    RegionDatasetSpec(seed=2, n_regions=4, n_extra=1, n_samples=1500, label_noise=0.05, noise_sd=0.5),
    RegionDatasetSpec(seed=3, n_regions=3, n_extra=2, n_samples=1500, label_noise=0.1, noise_sd=0.7),
)


def make_region_dataset(spec: RegionDatasetSpec):
    """``(X, y, region)``; column 0 of ``X`` is the location feature."""
    rng = make_rng(spec.seed, "region_dataset")
    n, R = spec.n_samples, spec.n_regions
    region = rng.integers(0, R, n)
    u = region + rng.uniform(0.05, 0.95, n)
    S = rng.normal(0.0, spec.noise_sd, (n, R + spec.n_extra))
    S[np.arange(n), region] = rng.normal(0.0, spec.signal_sd, n)
    y = (S[np.arange(n), region] > 0).astype(np.int64)
    flip = rng.random(n) < spec.label_noise
    y[flip] = 1 - y[flip]
    return np.column_stack([u, S]), y, region


def fit_region_experts(X, y, region, n_regions: int, kinds: Sequence[str] = EXPERT_KINDS) -> TrainedPool:
    members, learners = [], []
    for r in range(n_regions):
        spec = LearnerSpec.make(kinds[r % len(kinds)])
        mask = region == r
        learners.append(fit(spec, X[mask], y[mask], n_classes=2))
        members.append(MemberSpec(f"region-{r}", spec))
    return TrainedPool(tuple(learners), tuple(m.id for m in members), tuple(members))


def evaluate(spec: RegionDatasetSpec, seed: int, lambdas: Sequence[float] = (bpe.DEFAULT_LAMBDA,),
             delta: float = bpe.DEFAULT_DELTA) -> dict[str, float]:
    """Test accuracy of single best, simple average and BPE (one entry per lambda)."""
    X, y, region = make_region_dataset(spec)
    plan = stratified_split(y, 0.25, derive_seed(seed, "split"))
    tr, te = plan.train_idx, plan.test_idx
    scaler = Scaler.fit(X[tr], np.ones(X.shape[1], dtype=bool))
    X_tr, X_te = scaler.transform(X[tr]), scaler.transform(X[te])
    y_tr, r_tr = y[tr], region[tr]

    inner = stratified_split(y_tr, 0.2, derive_seed(seed, "screen"))
    a, b = inner.train_idx, inner.test_idx
    screen_pool = fit_region_experts(X_tr[a], y_tr[a], r_tr[a], spec.n_regions)
    screening_acc = [accuracy(P, y_tr[b]) for P in screen_pool.predict_all(X_tr[b])]

    pool = fit_region_experts(X_tr, y_tr, r_tr, spec.n_regions)
    P = pool.predict_all(X_te)
    out = {
        "single_best": accuracy(P[B.single_best(screening_acc)], y[te]),
        "simple_average": accuracy(B.simple_average(P), y[te]),
    }
    profiles = bpe.build_profiles(pool, X_tr, delta, derive_seed(seed, "profile"))
    for lam in lambdas:
        out[f"bpe_entropy@{lam:g}"] = accuracy(bpe.combine(P, profiles, lam), y[te])
    return out


def run_benchmark(seeds: Sequence[int] = range(10), lambdas: Sequence[float] = LAMBDA_GRID,
                  specs: Sequence[RegionDatasetSpec] = BENCHMARK) -> dict[str, float]:
    """Mean accuracy per method over every (dataset, seed) pair."""
    rows = [evaluate(s, seed, lambdas) for s in specs for seed in seeds]
    return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}
