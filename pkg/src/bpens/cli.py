"""Command-line front end.

Exit codes: 0 success, 1 invalid input (bad flag, config field, missing
file), 2 runtime failure (a job crashed, or verify-theory found a violation).
Command-line flags take precedence over values from the config file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bpe, harness, stats, theory
from .data import DataError, load_dataset, standardize
from .learners import KINDS, LearnerError, fit_pool, heterogeneous_members

log = logging.getLogger("bpens")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage mistakes are validation errors (exit 1), not argparse's default 2
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _globals_parent(suppress: bool) -> argparse.ArgumentParser:
    default = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=default,
                   help="master seed; overrides the config's seeds (run/sweep keep their count)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="debug logging")
    g.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="warnings and errors only")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="bpens",
        description="Behavioral Profiling Ensemble experiments.",
        parents=[_globals_parent(False)],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    common = [_globals_parent(True)]

    p = sub.add_parser("run", parents=common, help="run every (dataset, seed) job of a config")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", required=True, help="output directory (results.csv is written there)")
    p.add_argument("--workers", type=int, default=None, help="parallel jobs (overrides config)")

    p = sub.add_parser("sweep", parents=common, help="vary one hyperparameter, one run per value")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--axis", action="append", choices=harness.SWEEP_AXES, default=[],
                   help="axis to vary; values come from the config's sweep block or the defaults")
    p.add_argument("--out", required=True, help="output directory (sweep_<axis>.csv)")
    p.add_argument("--workers", type=int, default=None, help="parallel jobs (overrides config)")

    p = sub.add_parser("report", parents=common, help="tables and significance tests from a results CSV")
    p.add_argument("--results", required=True, help="results CSV written by run")
    p.add_argument("--reference", default=None,
                   help="method compared against all others (default bpe_entropy if present)")

    p = sub.add_parser("verify-theory", parents=common, help="randomized checks of the fusion theory")
    p.add_argument("--trials", type=int, default=1000, help="trials per property suite")

    p = sub.add_parser("profile", parents=common, help="build and print behavioral profiles")
    p.add_argument("--dataset", required=True, help="CSV dataset")
    p.add_argument("--label", required=True, help="label column name")
    p.add_argument("--out", required=True, help="profile store CSV to write")
    p.add_argument("--delta", type=float, default=bpe.DEFAULT_DELTA, help="perturbation scale")
    p.add_argument("--score", choices=bpe.SCORE_KINDS, default=bpe.NEG_ENTROPY, help="confidence score")
    p.add_argument("--learners", nargs="+", choices=KINDS, default=list(KINDS), help="pool members")

    parser.epilog = _flag_listing(parser, sub)
    return parser


def _flag_listing(parser, sub) -> str:
    lines = ["global flags: " + " ".join(_flags(parser)), "", "subcommand flags:"]
    for name, p in sub.choices.items():
        lines.append(f"  {name}: " + " ".join(_flags(p)))
    lines += ["", "flags given on the command line override values from --config."]
    return "\n".join(lines)


def _flags(p: argparse.ArgumentParser) -> list[str]:
    return [a.option_strings[-1] for a in p._actions
            if a.option_strings and not isinstance(a, argparse._HelpAction)]


def _setup_logging(args) -> None:
    level = logging.INFO
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.WARNING
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    root = logging.getLogger("bpens")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


def _apply_overrides(cfg: harness.ExperimentConfig, args) -> harness.ExperimentConfig:
    from dataclasses import replace

    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seeds=tuple(range(args.seed, args.seed + len(cfg.seeds))))
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, workers=args.workers)
    return cfg


def cmd_run(args) -> int:
    cfg = _apply_overrides(harness.load_config(args.config), args)
    records = harness.run_experiment(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_results(out / "results.csv", records)
    log.info("wrote %d records to %s", len(records), out / "results.csv")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(harness.load_config(args.config), args)
    axis, values = harness.sweep_axes(cfg, args.axis)
    log.info("sweeping %s over %s", axis, list(values))
    results = harness.sweep(cfg, axis, values)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"sweep_{axis}.csv"
    path.write_text(harness.format_sweep(axis, results), encoding="utf-8")
    datasets_methods = {v: harness.mean_accuracy_table(r) for v, r in results.items()}
    print(f"{axis:>10}  " + "  ".join(f"{m:>16}" for m in next(iter(datasets_methods.values()))[1]))
    for v, (_, methods, table) in datasets_methods.items():
        print(f"{v:>10g}  " + "  ".join(f"{x:>16.4f}" for x in table.mean(axis=0)))
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_report(args) -> int:
    records = harness.read_results(args.results)
    if not records:
        raise harness.ConfigError(f"results: {args.results} has no rows")
    datasets, methods, table = harness.mean_accuracy_table(records)
    print(format_report(datasets, methods, table, args.reference))
    return EXIT_OK


def format_report(datasets, methods, table, reference=None) -> str:
    lines = ["accuracy (mean over seeds)"]
    w = max(8, *(len(m) for m in methods))
    dw = max(8, *(len(d) for d in datasets))
    lines.append(" " * dw + "  " + "  ".join(f"{m:>{w}}" for m in methods))
    for d, row in zip(datasets, table):
        lines.append(f"{d:<{dw}}  " + "  ".join(f"{x:>{w}.4f}" for x in row))
    lines.append(f"{'mean':<{dw}}  " + "  ".join(f"{x:>{w}.4f}" for x in table.mean(axis=0)))
    if len(methods) < 2:
        return "\n".join(lines)

    ranks = stats.friedman_ranks(stats.ResultsMatrix(table, tuple(datasets), tuple(methods)))
    lines += ["", "Friedman average ranks (1 = best)"]
    for m, r in sorted(ranks.items(), key=lambda kv: kv[1]):
        lines.append(f"  {m:<{w}}  {r:.3f}")

    if reference is None:
        reference = "bpe_entropy" if "bpe_entropy" in methods else methods[0]
    if reference not in methods:
        raise harness.ConfigError(f"reference: method {reference!r} not in results")
    a = table[:, methods.index(reference)]
    lines += ["", f"Wilcoxon signed-rank, {reference} vs others (two-sided, alpha 0.05)",
              f"  {'comparison':<{2 * w + 4}}  {'R+':>8}  {'R-':>8}  {'hypothesis':<22}  p-value"]
    wtl_lines = ["", f"win-tie-loss of {reference} (critical values for n = {len(datasets)}: "
                 + ", ".join(f"{c:.2f}@{al:g}" for al, c in
                             stats.win_tie_loss(a, a).critical.items()) + ")"]
    for j, m in enumerate(methods):
        if m == reference:
            continue
        b = table[:, j]
        comp = f"{reference} vs {m}"
        try:
            res = stats.wilcoxon_signed_rank(a, b)
            hyp = "rejected" if res.rejected_at_005 else "not rejected"
            lines.append(f"  {comp:<{2 * w + 4}}  {res.r_plus:>8.1f}  {res.r_minus:>8.1f}  "
                         f"{hyp:<22}  {res.p_value:.4f}")
        except stats.StatsError:
            lines.append(f"  {comp:<{2 * w + 4}}  {'-':>8}  {'-':>8}  {'identical':<22}  -")
        wtl = stats.win_tie_loss(a, b)
        sig = [f"{al:g}" for al, s in wtl.significant.items() if s]
        wtl_lines.append(f"  vs {m:<{w}}  {wtl.wins}-{wtl.ties}-{wtl.losses}"
                         + (f"  significant at {', '.join(sig)}" if sig else ""))
    return "\n".join(lines + wtl_lines)


def cmd_verify_theory(args) -> int:
    seed = 0 if getattr(args, "seed", None) is None else args.seed
    if args.trials < 1:
        raise harness.ConfigError("trials: must be >= 1")
    results = theory.run_suites(seed, args.trials)
    print(f"{'property':<36}  {'trials':>7}  {'violations':>10}")
    for r in results:
        print(f"{r.name:<36}  {r.trials:>7}  {r.violations:>10}")
    bad = sum(r.violations for r in results)
    if bad:
        log.error("%d theory violation(s) with seed %d", bad, seed)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_profile(args) -> int:
    seed = 0 if getattr(args, "seed", None) is None else args.seed
    if args.delta < 0:
        raise harness.ConfigError("delta: must be >= 0")
    ds = standardize(load_dataset(args.dataset, args.label))
    pool = fit_pool(heterogeneous_members(args.learners), ds.X, ds.y, ds.n_classes)
    profiles = bpe.build_profiles(pool, ds.X, args.delta, seed, args.score)
    bpe.save_profiles(args.out, profiles)
    print(f"{'model':<22}  {'mu':>12}  {'sigma':>12}  {'n':>7}")
    for p in profiles:
        print(f"{p.model_id:<22}  {p.mu:>12.6f}  {p.sigma:>12.6f}  {p.n:>7d}")
    log.info("wrote %d profiles to %s", len(profiles), args.out)
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "report": cmd_report,
    "verify-theory": cmd_verify_theory,
    "profile": cmd_profile,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"ERROR {exc}", file=sys.stderr)
        return EXIT_INVALID
    _setup_logging(args)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except harness.RunError as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME
    except (harness.ConfigError, DataError, LearnerError, bpe.ProfileError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except Exception as exc:  # pragma: no cover - last-resort context
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
