"""Command line front end: ``run``, ``compare`` and ``sweep``.

Exit codes: 0 success, 2 configuration error, 3 scenario deadlock (an incast
was configured but no mouse completed; partial metrics are still written),
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import config as cfgmod
from . import report
from .config import ConfigError, ScenarioConfig
from .metrics import MetricsRecord
from .scenario import run_scenario
from .sim.network import AsymmetricRoute, InvariantViolation

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEADLOCK = 3
EXIT_INVARIANT = 4

# Top-level sections compare is allowed to vary between members.
COMPARABLE_SECTIONS = ("name", "aqm", "sender")

SWEEP_KEYS = {
    "alpha": ("aqm", "alpha", float),
    "T_s": ("aqm", "T_s", float),
    "M": ("aqm", "M", int),
    "buffer_bytes": ("topology", "buffer_bytes", int),
}


class Deadlock(RuntimeError):
    pass


def _log(args, msg: str) -> None:
    if not args.quiet:
        print(msg, file=sys.stderr)


def _load(path, seed) -> dict:
    resolved = cfgmod.load(path)
    if seed is not None:
        resolved = cfgmod.with_seed(resolved, seed)
    return resolved


def _typed(resolved: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.from_resolved(resolved)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def execute(resolved: dict, out_dir, trace: bool = False, plots: bool = True) -> MetricsRecord:
    """Run one scenario and write its artifacts; raises Deadlock after writing."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _typed(resolved)
    if trace:
        with open(out / "trace.tsv", "w", encoding="utf-8") as fh:
            rec = run_scenario(cfg, trace=fh)
    else:
        rec = run_scenario(cfg)
    report.write_run(rec, resolved, out)
    if plots:
        from .plots import plot_run

        plot_run(rec, out, buffer_bytes=cfg.topology.buffer)
    if cfg.incast is not None and rec.summary["mice_completed"] == 0:
        raise Deadlock(f"{cfg.name}: no incast flow completed within {cfg.duration} s")
    return rec


def _member(job):
    resolved, out_dir, trace, plots = job
    try:
        return execute(resolved, out_dir, trace, plots), None
    except Deadlock as exc:
        return None, str(exc)


def check_comparable(docs: list[dict]) -> None:
    def stripped(d):
        return {k: v for k, v in d.items() if k not in COMPARABLE_SECTIONS}

    base = stripped(docs[0])
    for i, d in enumerate(docs[1:], start=1):
        other = stripped(d)
        for key in sorted(set(base) | set(other)):
            if base.get(key) != other.get(key):
                raise ConfigError(f"config #{i} differs from config #0 in {key!r}; "
                                  f"only {', '.join(COMPARABLE_SECTIONS)} may differ", key)


def _labels(docs) -> list[str]:
    names = [d["name"] for d in docs]
    if len(set(names)) == len(names):
        return names
    return [f"{i}_{n}" for i, n in enumerate(names)]


def cmd_run(args) -> int:
    resolved = _load(args.config, args.seed)
    rec = execute(resolved, args.out, trace=args.trace, plots=not args.no_plots)
    s = rec.summary
    _log(args, f"{resolved['name']}: drops={s['total_drops']} mice={s['mice_completed']}/{s['mice_flows']} "
               f"fct_avg={report.fmt(s['mice_fct_avg_s'])}s -> {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    if len(args.config) < 2:
        raise ConfigError("compare needs at least two --config files", "config")
    docs = [_load(p, args.seed) for p in args.config]
    check_comparable(docs)
    for d in docs:
        _typed(d)
    labels = _labels(docs)
    out = Path(args.out)
    jobs = [(d, out / label, args.trace, not args.no_plots) for d, label in zip(docs, labels)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_member, jobs))
    else:
        results = [_member(j) for j in jobs]
    stuck = [msg for _, msg in results if msg]
    for label in labels:
        _log(args, f"  {label} -> {out / label}")
    summaries = [report.read_summary(out / label / "summary.csv") for label in labels]
    path = report.write_comparison(labels, summaries, out)
    if not args.no_plots and not stuck:
        from .plots import plot_comparison

        plot_comparison(labels, [r for r, _ in results], out)
    _log(args, f"comparison -> {path}")
    if stuck:
        raise Deadlock("; ".join(stuck))
    return EXIT_OK


def _parse_grid(items) -> dict[str, list]:
    grid = {}
    for item in items or []:
        key, _, values = item.partition("=")
        if key not in SWEEP_KEYS or not values:
            raise ConfigError(f"bad --grid entry {item!r}; expected one of "
                              f"{', '.join(SWEEP_KEYS)} as KEY=v1,v2,...", key or "grid")
        conv = SWEEP_KEYS[key][2]
        try:
            grid[key] = [conv(v) for v in values.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad value in --grid {item!r}", key) from exc
    if not grid:
        raise ConfigError("sweep needs at least one --grid KEY=v1,v2,...", "grid")
    return grid


def cmd_sweep(args) -> int:
    base = _load(args.config, args.seed)
    grid = _parse_grid(args.grid)
    keys = list(grid)
    docs, labels = [], []
    for combo in itertools.product(*(grid[k] for k in keys)):
        doc = copy.deepcopy(base)
        for k, v in zip(keys, combo):
            section, field, _ = SWEEP_KEYS[k]
            doc[section][field] = v
        doc = cfgmod.resolve(doc)
        _typed(doc)
        docs.append(doc)
        labels.append("_".join(f"{k}={v}" for k, v in zip(keys, combo)))
    out = Path(args.out)
    jobs = [(d, out / label, args.trace, not args.no_plots) for d, label in zip(docs, labels)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_member, jobs))
    else:
        results = [_member(j) for j in jobs]
    rows = []
    for label, combo in zip(labels, itertools.product(*(grid[k] for k in keys))):
        s = report.read_summary(out / label / "summary.csv")
        rows.append([label, *combo, *(s[m] for m in report.COMPARE_METRICS)])
    path = report.write_table(out / "sweep.csv", ["label", *keys, *report.COMPARE_METRICS], rows)
    _log(args, f"sweep of {len(rows)} points -> {path}")
    stuck = [msg for _, msg in results if msg]
    if stuck:
        raise Deadlock("; ".join(stuck))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rwndq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--trace", action="store_true", help="dump the event trace to trace.tsv")
    common.add_argument("--quiet", action="store_true")
    common.add_argument("--no-plots", action="store_true", help="skip the PNG figures")

    p = sub.add_parser("run", parents=[common], help="run one scenario")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", parents=[common],
                       help="run scenarios differing only in AQM/sender and tabulate them")
    p.add_argument("--config", required=True, action="append",
                   help="repeat once per member; the first is the reference")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", parents=[common], help="parameter grid over one base scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", action="append", metavar="KEY=v1,v2",
                   help=f"KEY in {{{', '.join(SWEEP_KEYS)}}}; repeat for a product grid")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Deadlock as exc:
        print(f"deadlock: {exc}", file=sys.stderr)
        return EXIT_DEADLOCK
    except (InvariantViolation, AsymmetricRoute) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
