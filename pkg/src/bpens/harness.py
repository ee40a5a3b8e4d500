"""Experiment protocol: config, pool screening, OOF reference sets, seeded runs and sweeps.

One *job* is a ``(dataset, seed)`` pair.  Per job the dataset is downsampled,
split into train/test (stratified), standardized with train statistics, the
candidate pool is screened on an inner 80/20 split and refitted on the full
training set, and then every requested method predicts the test rows.
Reference-based methods additionally get an out-of-fold reference set and BPE
gets behavioral profiles; neither is built unless some method needs it.

Every random draw is derived from ``(seed, dataset name, purpose)`` so adding a
method or a dataset never shifts the randomness of another.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baselines as B
from . import bpe
from ._rng import derive_seed
from .data import Dataset, Scaler, downsample, load_dataset, stratified_folds, stratified_split
from .learners import (
    KINDS,
    LearnerSpec,
    MemberSpec,
    TrainedPool,
    bagging_members,
    fit_member,
    fit_pool,
)
from .stats import accuracy

log = logging.getLogger(__name__)

SCREEN_HOLDOUT = 0.2
FIXED_REFERENCE_FRACTION = 0.25
SCREEN_TOL = 1e-12

REFERENCE_METHODS = (
    "weighted_average", "lca", "mcb", "knora_u", "knora_e", "rrc",
    "des_knn_df", "des_knn_q", "des_knn_re",
)
BPE_METHODS = {
    "bpe_entropy": (bpe.NEG_ENTROPY, bpe.PROB),
    "bpe_margin": (bpe.TOP_MARGIN, bpe.PROB),
    "bpe_entropy_rank": (bpe.NEG_ENTROPY, bpe.RANK),
}
STATIC_METHODS = ("single_best", "simple_average", "median_average")
METHODS = STATIC_METHODS + REFERENCE_METHODS + tuple(BPE_METHODS)

SWEEP_AXES = ("lambda", "delta", "alpha")
DEFAULT_SWEEPS = {
    "lambda": (0.5, 0.7, 1.2, 1.5),
    "delta": (0.1, 0.3, 0.7, 1.0),
    "alpha": (0.05, 0.1, 0.15, 0.2, 0.25),
}
REFERENCE_MODES = ("oof", "fixed_split")
RESULT_FIELDS = ("dataset", "method", "seed", "accuracy", "fit_seconds", "predict_seconds", "pool_size")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class RunError(RuntimeError):
    """A job failed; the message carries the dataset and seed."""


# configuration ----------------------------------------------------------------


@dataclass(frozen=True)
class DatasetRef:
    path: str
    label: str
    name: str


@dataclass(frozen=True)
class BPEParams:
    lam: float = bpe.DEFAULT_LAMBDA
    delta: float = bpe.DEFAULT_DELTA
    xi: float = bpe.DEFAULT_XI
    clip: float = bpe.DEFAULT_CLIP


@dataclass(frozen=True)
class DESParams:
    p_a: float = B.DEFAULT_P_A
    p_b: float = B.DEFAULT_P_B
    mcb_threshold: float = B.DEFAULT_MCB_THRESHOLD


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple[DatasetRef, ...]
    methods: tuple[str, ...]
    pool: tuple[MemberSpec, ...] = ()
    alpha: float = 0.15
    folds: int = 5
    seeds: tuple[int, ...] = tuple(range(50))
    bpe: BPEParams = BPEParams()
    roc_k: int = B.DEFAULT_K
    test_fraction: float = 0.25
    max_n: int = 10_000
    reference_mode: str = "oof"
    des: DESParams = DESParams()
    sweep: dict = field(default_factory=dict)
    workers: int = 1
    record_timing: bool = False

    def __post_init__(self):
        if not self.pool:
            object.__setattr__(self, "pool", tuple(_heterogeneous(list(KINDS), "pool")))
        validate(self)


def _heterogeneous(entries, where) -> list[MemberSpec]:
    out = []
    for i, e in enumerate(entries):
        spec, mid = _learner(e, f"{where}.learners[{i}]")
        out.append(MemberSpec(mid or spec.kind, spec))
    return out


def _learner(e, where):
    if isinstance(e, str):
        return _make_spec(e, {}, where), None
    if isinstance(e, dict):
        _no_unknown(e, {"kind", "params", "id"}, where)
        if "kind" not in e:
            raise ConfigError(f"{where}.kind: missing")
        return _make_spec(e["kind"], e.get("params", {}), where), e.get("id")
    raise ConfigError(f"{where}: expected a learner name or object")


def _make_spec(kind, params, where) -> LearnerSpec:
    try:
        return LearnerSpec.make(kind, **params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _no_unknown(d: dict, allowed, where):
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {extra}")


def validate(cfg: ExperimentConfig) -> None:
    if not cfg.datasets:
        raise ConfigError("datasets: at least one dataset is required")
    if not cfg.methods:
        raise ConfigError("methods: at least one method is required")
    for m in cfg.methods:
        if m not in METHODS:
            raise ConfigError(f"methods: unknown method {m!r}; expected one of {list(METHODS)}")
    if len(set(cfg.methods)) != len(cfg.methods):
        raise ConfigError("methods: duplicate entries")
    if not 0 <= cfg.alpha < 1:
        raise ConfigError(f"alpha: must lie in [0, 1), got {cfg.alpha}")
    if cfg.folds < 2:
        raise ConfigError(f"folds: must be >= 2, got {cfg.folds}")
    if not cfg.seeds:
        raise ConfigError("seeds: at least one seed is required")
    if any(s < 0 for s in cfg.seeds) or len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("seeds: must be distinct non-negative integers")
    if cfg.bpe.lam < 0:
        raise ConfigError("bpe.lambda: must be >= 0")
    if cfg.bpe.delta < 0:
        raise ConfigError("bpe.delta: must be >= 0")
    if cfg.bpe.xi <= 0 or cfg.bpe.clip <= 0:
        raise ConfigError("bpe.xi/bpe.clip: must be > 0")
    if cfg.roc_k < 1:
        raise ConfigError("roc_k: must be >= 1")
    if not 0 < cfg.test_fraction < 1:
        raise ConfigError("test_fraction: must lie in (0, 1)")
    if cfg.max_n < 2:
        raise ConfigError("max_n: must be >= 2")
    if cfg.reference_mode not in REFERENCE_MODES:
        raise ConfigError(f"reference_mode: expected one of {REFERENCE_MODES}")
    for name in ("p_a", "p_b"):
        v = getattr(cfg.des, name)
        if not 0 < v <= 1:
            raise ConfigError(f"des.{name}: must lie in (0, 1]")
    if not 0 <= cfg.des.mcb_threshold <= 1:
        raise ConfigError("des.mcb_threshold: must lie in [0, 1]")
    for axis, values in cfg.sweep.items():
        if axis not in SWEEP_AXES:
            raise ConfigError(f"sweep: unknown axis {axis!r}; expected one of {SWEEP_AXES}")
        if not values:
            raise ConfigError(f"sweep.{axis}: needs at least one value")
    if cfg.workers < 1:
        raise ConfigError("workers: must be >= 1")
    ids = [m.id for m in cfg.pool]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"pool: member ids must be unique, got {ids}")


CONFIG_KEYS = {
    "datasets", "methods", "pool", "alpha", "folds", "master_seed", "n_seeds", "seeds",
    "bpe", "roc_k", "test_fraction", "max_n", "reference_mode", "des", "sweep", "workers",
    "record_timing",
}


def config_from_dict(raw: dict, base_dir: Path | str = ".") -> ExperimentConfig:
    """Build a config from parsed JSON; relative dataset paths resolve against ``base_dir``."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    _no_unknown(raw, CONFIG_KEYS, "config")
    base_dir = Path(base_dir)
    for req in ("datasets", "methods"):
        if req not in raw:
            raise ConfigError(f"{req}: missing")
    datasets = []
    for i, d in enumerate(raw["datasets"]):
        where = f"datasets[{i}]"
        if not isinstance(d, dict):
            raise ConfigError(f"{where}: expected an object with path and label")
        _no_unknown(d, {"path", "label", "name"}, where)
        if "path" not in d or "label" not in d:
            raise ConfigError(f"{where}: path and label are required")
        p = Path(d["path"])
        p = p if p.is_absolute() else base_dir / p
        datasets.append(DatasetRef(str(p), str(d["label"]), str(d.get("name", p.stem))))
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise ConfigError(f"datasets: names must be unique, got {names}")

    kw: dict = {"datasets": tuple(datasets), "methods": tuple(raw["methods"])}
    if "pool" in raw:
        kw["pool"] = _pool_from_dict(raw["pool"], raw.get("master_seed", 0))
    for key in ("alpha", "folds", "roc_k", "test_fraction", "max_n", "reference_mode",
                "workers", "record_timing"):
        if key in raw:
            kw[key] = raw[key]
    if "seeds" in raw and ("n_seeds" in raw or "master_seed" in raw):
        raise ConfigError("seeds: give either an explicit list or master_seed/n_seeds")
    if "seeds" in raw:
        kw["seeds"] = tuple(int(s) for s in raw["seeds"])
    else:
        start = int(raw.get("master_seed", 0))
        kw["seeds"] = tuple(range(start, start + int(raw.get("n_seeds", 50))))
    if "bpe" in raw:
        b = raw["bpe"]
        _no_unknown(b, {"lambda", "delta", "xi", "clip"}, "bpe")
        kw["bpe"] = BPEParams(
            lam=float(b.get("lambda", bpe.DEFAULT_LAMBDA)),
            delta=float(b.get("delta", bpe.DEFAULT_DELTA)),
            xi=float(b.get("xi", bpe.DEFAULT_XI)),
            clip=float(b.get("clip", bpe.DEFAULT_CLIP)),
        )
    if "des" in raw:
        d = raw["des"]
        _no_unknown(d, {"p_a", "p_b", "mcb_threshold"}, "des")
        kw["des"] = DESParams(**{k: float(v) for k, v in d.items()})
    if "sweep" in raw:
        if not isinstance(raw["sweep"], dict):
            raise ConfigError("sweep: expected an object of axis -> values")
        kw["sweep"] = {k: tuple(float(x) for x in v) for k, v in raw["sweep"].items()}
    try:
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from None


def _pool_from_dict(p, master_seed) -> tuple[MemberSpec, ...]:
    if not isinstance(p, dict):
        raise ConfigError("pool: expected an object")
    kind = p.get("kind", "heterogeneous")
    if kind == "heterogeneous":
        _no_unknown(p, {"kind", "learners"}, "pool")
        return tuple(_heterogeneous(p.get("learners", list(KINDS)), "pool"))
    if kind == "bagging":
        _no_unknown(p, {"kind", "learner", "size", "seed"}, "pool")
        spec, _ = _learner(p.get("learner", "decision_tree"), "pool.learner")
        size = int(p.get("size", 40))
        if size < 1:
            raise ConfigError("pool.size: must be >= 1")
        return tuple(bagging_members(spec, size, int(p.get("seed", master_seed))))
    raise ConfigError(f"pool.kind: expected 'heterogeneous' or 'bagging', got {kind!r}")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config: file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON ({exc})") from None
    return config_from_dict(raw, path.parent)


# screening and reference construction ---------------------------------------


def screening_rule(acc, alpha: float) -> np.ndarray:
    """Mask of models with accuracy ``>= best * (1 - alpha)`` (1e-12 slack for rounding)."""
    acc = np.asarray(acc, dtype=float)
    if not 0 <= alpha < 1:
        raise ConfigError(f"alpha: must lie in [0, 1), got {alpha}")
    return acc >= acc.max() * (1.0 - alpha) - SCREEN_TOL


@dataclass(frozen=True)
class ScreenResult:
    pool: TrainedPool
    candidate_acc: np.ndarray
    retained: np.ndarray
    fit_idx: np.ndarray  # rows of the training set used to fit candidates
    holdout_idx: np.ndarray  # rows used to score them


def screen(members: Sequence[MemberSpec], X, y, n_classes: int, alpha: float, seed: int) -> ScreenResult:
    """Fit every candidate on 80% of the training rows, score on the other 20%,
    keep those within ``alpha`` of the best, and refit the survivors on all rows."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    plan = stratified_split(y, SCREEN_HOLDOUT, derive_seed(seed, "screen"))
    a, b = plan.train_idx, plan.test_idx
    acc = np.array([
        accuracy(fit_member(m, X[a], y[a], n_classes).predict_proba(X[b]), y[b]) for m in members
    ])
    keep = screening_rule(acc, alpha)
    retained = [m for m, k in zip(members, keep) if k]
    pool = fit_pool(retained, X, y, n_classes, screening_acc=acc[keep])
    return ScreenResult(pool, acc, keep, a, b)


def build_oof_reference(members: Sequence[MemberSpec], X, y, n_classes: int, folds: int,
                        seed: int) -> B.ReferenceSet:
    """Cross-fitted predictions for every training row from models that never saw it."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    fold = stratified_folds(y, folds, derive_seed(seed, "oof"))
    out = np.empty((len(members), y.size, n_classes))
    fit_sets = []
    for f in range(folds):
        tr = np.flatnonzero(fold != f)
        te = np.flatnonzero(fold == f)
        fit_sets.append(tr)
        for k, m in enumerate(members):
            out[k, te] = fit_member(m, X[tr], y[tr], n_classes).predict_proba(X[te])
    return B.ReferenceSet(X, y, out, fold=fold, fit_sets=tuple(fit_sets), rows=np.arange(y.size))


def build_fixed_reference(members: Sequence[MemberSpec], X, y, n_classes: int,
                          seed: int) -> B.ReferenceSet:
    """Fit on 75% of the training rows, predict the held-out 25% as the reference set."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    plan = stratified_split(y, FIXED_REFERENCE_FRACTION, derive_seed(seed, "fixed_reference"))
    tr, te = plan.train_idx, plan.test_idx
    out = np.stack([fit_member(m, X[tr], y[tr], n_classes).predict_proba(X[te]) for m in members])
    return B.ReferenceSet(X[te], y[te], out, fold=np.zeros(te.size, dtype=np.int64),
                          fit_sets=(tr,), rows=te)


# one (dataset, seed) job ------------------------------------------------------


@dataclass(frozen=True)
class ResultRecord:
    dataset: str
    method: str
    seed: int
    accuracy: float
    fit_seconds: float
    predict_seconds: float
    pool_size: int


@dataclass
class JobContext:
    """Everything one job's methods may read.  ``ref`` and the RoC arrays stay
    ``None`` unless a reference-based method was requested."""

    name: str
    seed: int
    train_idx: np.ndarray
    test_idx: np.ndarray
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    screening: ScreenResult
    outputs: np.ndarray  # (K, M, C) pool outputs on the test rows
    ref: B.ReferenceSet | None = None
    roc_idx: np.ndarray | None = None
    roc_dist: np.ndarray | None = None
    profiles: dict = field(default_factory=dict)  # score kind -> profiles
    fit_seconds: dict = field(default_factory=dict)

    @property
    def pool(self) -> TrainedPool:
        return self.screening.pool


@functools.lru_cache(maxsize=8)
def _load(path: str, label: str) -> Dataset:
    return load_dataset(path, label)


def prepare_job(cfg: ExperimentConfig, ds: Dataset, name: str, seed: int) -> JobContext:
    clock = time.perf_counter
    ds = downsample(ds, cfg.max_n, derive_seed(seed, name, "downsample"))
    plan = stratified_split(ds, cfg.test_fraction, derive_seed(seed, name, "split"))
    train, test = ds.subset(plan.train_idx), ds.subset(plan.test_idx)
    scaler = Scaler.fit(train.X, ds.numeric_mask)
    X_train, X_test = scaler.transform(train.X), scaler.transform(test.X)
    C = ds.n_classes

    # bagging members get fresh bootstrap draws per job
    members = [
        m if m.bootstrap_seed is None
        else replace(m, bootstrap_seed=derive_seed(seed, name, "bag", m.bootstrap_seed))
        for m in cfg.pool
    ]
    t0 = clock()
    scr = screen(members, X_train, train.y, C, cfg.alpha, derive_seed(seed, name, "screen"))
    pool_time = clock() - t0
    ctx = JobContext(name, seed, plan.train_idx, plan.test_idx, X_train, train.y, X_test, test.y,
                     scr, scr.pool.predict_all(X_test))

    methods = set(cfg.methods)
    if methods & set(REFERENCE_METHODS):
        t0 = clock()
        members = scr.pool.members
        ref_seed = derive_seed(seed, name, "reference")
        if cfg.reference_mode == "oof":
            ctx.ref = build_oof_reference(members, X_train, train.y, C, cfg.folds, ref_seed)
        else:
            ctx.ref = build_fixed_reference(members, X_train, train.y, C, ref_seed)
        k = min(cfg.roc_k, ctx.ref.X.shape[0])
        ctx.roc_idx, ctx.roc_dist = B.knn_batch(ctx.ref.X, X_test, k)
        ctx.fit_seconds["reference"] = clock() - t0
    for m in methods & set(BPE_METHODS):
        kind = BPE_METHODS[m][0]
        if kind not in ctx.profiles:
            t0 = clock()
            ctx.profiles[kind] = bpe.build_profiles(
                scr.pool, X_train, cfg.bpe.delta, derive_seed(seed, name, "profile"), kind
            )
            ctx.fit_seconds[kind] = clock() - t0
    ctx.fit_seconds["pool"] = pool_time
    return ctx


def predict_method(method: str, ctx: JobContext, cfg: ExperimentConfig) -> np.ndarray:
    P = ctx.outputs
    if method == "single_best":
        return P[B.single_best(ctx.pool.screening_acc)]
    if method == "simple_average":
        return B.simple_average(P)
    if method == "median_average":
        return B.median_average(P)
    if method in BPE_METHODS:
        kind, mode = BPE_METHODS[method]
        b = cfg.bpe
        return bpe.combine(P, ctx.profiles[kind], b.lam, b.xi, b.clip, mode)
    ref, idx, dist, des = ctx.ref, ctx.roc_idx, ctx.roc_dist, cfg.des
    if ref is None:
        raise RunError(f"method {method} needs a reference set")
    if method == "weighted_average":
        return B.weighted_average(P, ref.accuracy)
    if method == "lca":
        return B.lca_batch(ref, idx, P)
    if method == "mcb":
        return B.mcb_batch(ref, idx, P, des.mcb_threshold)
    if method == "knora_u":
        return B.knora_u_batch(ref, idx, P)
    if method == "knora_e":
        return B.knora_e_batch(ref, idx, P)
    if method == "rrc":
        return B.rrc_batch(ref, idx, dist, P)
    if method.startswith("des_knn_"):
        measure = method.rsplit("_", 1)[1].upper()
        return B.des_knn_batch(ref, idx, P, measure, des.p_a, des.p_b)
    raise RunError(f"unknown method {method!r}")


def _fit_time(method: str, ctx: JobContext) -> float:
    t = ctx.fit_seconds.get("pool", 0.0)
    if method in REFERENCE_METHODS:
        t += ctx.fit_seconds.get("reference", 0.0)
    if method in BPE_METHODS:
        t += ctx.fit_seconds.get(BPE_METHODS[method][0], 0.0)
    return t


def run_job(cfg: ExperimentConfig, ds_index: int, seed: int) -> list[ResultRecord]:
    ref = cfg.datasets[ds_index]
    try:
        ds = _load(ref.path, ref.label)
        ctx = prepare_job(cfg, ds, ref.name, seed)
        records = []
        for method in cfg.methods:
            t0 = time.perf_counter()
            H = predict_method(method, ctx, cfg)
            pt = time.perf_counter() - t0
            records.append(ResultRecord(
                ref.name, method, seed, accuracy(H, ctx.y_test),
                _fit_time(method, ctx) if cfg.record_timing else 0.0,
                pt if cfg.record_timing else 0.0,
                len(ctx.pool),
            ))
        return records
    except RunError:
        raise
    except Exception as exc:
        raise RunError(f"dataset {ref.name!r} seed {seed}: {type(exc).__name__}: {exc}") from exc


def _job(args):
    return run_job(*args)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list[ResultRecord]:
    """All ``(dataset, seed)`` jobs, sorted by (dataset, method, seed).

    Results do not depend on ``workers``: every job derives its randomness
    from its own ``(seed, dataset)`` and jobs share no state.
    """
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg, i, s) for i in range(len(cfg.datasets)) for s in cfg.seeds]
    log.info("running %d jobs (%d datasets x %d seeds) on %d worker(s)",
             len(jobs), len(cfg.datasets), len(cfg.seeds), workers)
    records: list[ResultRecord] = []
    if workers <= 1 or len(jobs) <= 1:
        for j in jobs:
            records.extend(_job(j))
            log.debug("done %s seed %d", cfg.datasets[j[1]].name, j[2])
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for recs in ex.map(_job, jobs):
                records.extend(recs)
    return sort_records(records)


def sort_records(records) -> list[ResultRecord]:
    return sorted(records, key=lambda r: (r.dataset, r.method, r.seed))


# results store ----------------------------------------------------------------


def _row(r: ResultRecord) -> list[str]:
    return [r.dataset, r.method, str(r.seed), f"{r.accuracy:.6f}", f"{r.fit_seconds:.6f}",
            f"{r.predict_seconds:.6f}", str(r.pool_size)]


def format_results(records: Sequence[ResultRecord], extra: Sequence[tuple[str, str]] = ()) -> str:
    """CSV text; ``extra`` prepends constant ``(column, value)`` pairs to every row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([c for c, _ in extra] + list(RESULT_FIELDS))
    for r in records:
        w.writerow([v for _, v in extra] + _row(r))
    return buf.getvalue()


def write_results(path, records: Sequence[ResultRecord]) -> None:
    Path(path).write_text(format_results(records), encoding="utf-8")


def read_results(path) -> list[ResultRecord]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"results: file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULT_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"results: {path} lacks column(s) {sorted(missing)}")
        try:
            return [
                ResultRecord(r["dataset"], r["method"], int(r["seed"]), float(r["accuracy"]),
                             float(r["fit_seconds"]), float(r["predict_seconds"]), int(r["pool_size"]))
                for r in reader
            ]
        except ValueError as exc:
            raise ConfigError(f"results: malformed row in {path} ({exc})") from None


def mean_accuracy_table(records: Sequence[ResultRecord]):
    """``(datasets, methods, (D, M) mean accuracy)``; raises if a cell is missing."""
    datasets = sorted({r.dataset for r in records})
    methods = list(dict.fromkeys(r.method for r in records))
    sums = np.zeros((len(datasets), len(methods)))
    counts = np.zeros_like(sums)
    di = {d: i for i, d in enumerate(datasets)}
    mi = {m: j for j, m in enumerate(methods)}
    for r in records:
        sums[di[r.dataset], mi[r.method]] += r.accuracy
        counts[di[r.dataset], mi[r.method]] += 1
    if np.any(counts == 0):
        raise ConfigError("results: some dataset/method cells have no runs")
    return datasets, methods, sums / counts


# sweeps -------------------------------------------------------------------------


def with_axis(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis == "lambda":
        return replace(cfg, bpe=replace(cfg.bpe, lam=value), sweep={})
    if axis == "delta":
        return replace(cfg, bpe=replace(cfg.bpe, delta=value), sweep={})
    if axis == "alpha":
        return replace(cfg, alpha=value, sweep={})
    raise ConfigError(f"sweep: unknown axis {axis!r}; expected one of {SWEEP_AXES}")


def sweep_axes(cfg: ExperimentConfig, axes: Sequence[str] = ()) -> tuple[str, tuple[float, ...]]:
    """Resolve the single axis to vary: from ``axes`` (CLI) or else the config."""
    chosen = list(dict.fromkeys(axes)) or list(cfg.sweep)
    if len(chosen) != 1:
        raise ConfigError(f"sweep: exactly one axis must vary, got {chosen or 'none'}")
    axis = chosen[0]
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep: unknown axis {axis!r}; expected one of {SWEEP_AXES}")
    return axis, tuple(cfg.sweep.get(axis, DEFAULT_SWEEPS[axis]))


def sweep(cfg: ExperimentConfig, axis: str, values: Sequence[float],
          workers: int | None = None) -> dict[float, list[ResultRecord]]:
    """One full run per value of a single axis, all on the same seeds."""
    return {float(v): run_experiment(with_axis(cfg, axis, float(v)), workers) for v in values}


def format_sweep(axis: str, results: dict[float, list[ResultRecord]]) -> str:
    parts = []
    for i, (v, recs) in enumerate(results.items()):
        text = format_results(recs, extra=[("axis", axis), ("value", repr(v))])
        parts.append(text if i == 0 else text.split("\n", 1)[1])
    return "".join(parts)


def config_summary(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["pool"] = [m.id for m in cfg.pool]
    return d
