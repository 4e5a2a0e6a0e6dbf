"""Command-line front end: ``genesift {gensynth,select,run,bench}``.

Exit codes: 0 success, 1 usage, 2 data error, 3 runtime or numeric error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from . import config as config_mod
from .data import align_labels, load_csv, minmax_normalize, write_csv
from .errors import DataError, GenesiftError, MaskError, ParseError, StageError
from .metaheuristics import run_search
from .pipeline import (ALGORITHM_LABELS, REPORT_COLUMNS, bench, format_table, gen_synthetic,
                       reports_to_csv, run_pipeline)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p):
    p.add_argument("--config", help="flat 'section.key = value' config file")
    p.add_argument("--seed", type=int, help="overrides every seed in the configuration")
    p.add_argument("--print-config", action="store_true",
                   help="print the resolved configuration before running")
    p.add_argument("--nan", default="100.0",
                   help="replacement for missing cells, or 'reject' (default 100.0)")
    g = p.add_argument_group("configuration keys (override the config file)")
    for key in config_mod.all_keys():
        g.add_argument(f"--{key}", dest=key, metavar="V", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="genesift", description="Gene selection by firefly or elephant "
                                                  "search, scored by a deep classifier.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    g = sub.add_parser("gensynth", help="write a synthetic dataset and its informative-column list")
    g.add_argument("--n", type=int, default=200)
    g.add_argument("--d", type=int, default=100)
    g.add_argument("--k", type=int, default=5)
    g.add_argument("--classes", type=int, default=2)
    g.add_argument("--noise", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out", required=True, help="CSV path; the index list goes to <out>.mask")

    s = sub.add_parser("select", help="feature selection only")
    s.add_argument("--data", required=True)
    s.add_argument("--algorithm", choices=sorted(ALGORITHM_LABELS))
    s.add_argument("--mask-out", help="where to write selected column indices "
                                      "(default <data>.<algorithm>.mask)")
    s.add_argument("--trace", help="append (iteration, best_fitness, popcount) rows to this CSV")
    s.add_argument("--jobs", type=int)
    _add_config_flags(s)

    r = sub.add_parser("run", help="select features, then train and evaluate the classifier")
    r.add_argument("--data", required=True)
    r.add_argument("--test", help="fixed test file; replaces the eval protocol")
    r.add_argument("--algorithm", choices=sorted(ALGORITHM_LABELS))
    r.add_argument("--out", help="append the report row to this CSV")
    r.add_argument("--jobs", type=int)
    r.add_argument("--no-timing", action="store_true", help="write NA instead of the wall time")
    _add_config_flags(r)

    b = sub.add_parser("bench", help="run every manifest dataset with both algorithms")
    b.add_argument("--manifest", required=True, help="lines of 'name = path' or 'name = train | test'")
    b.add_argument("--algorithm", choices=sorted(ALGORITHM_LABELS) + ["both"], default="both")
    b.add_argument("--out", help="write the report CSV here")
    b.add_argument("--jobs", type=int, default=1, help="dataset rows run in parallel")
    b.add_argument("--no-timing", action="store_true", help="write NA instead of the wall time")
    _add_config_flags(b)
    return parser


def _nan_policy(text):
    if text.lower() == "reject":
        return None
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"--nan expects a number or 'reject', got {text!r}") from None


def _resolve_config(args, **extra):
    overrides = {k: getattr(args, k) for k in config_mod.KNOWN_KEYS if getattr(args, k) is not None}
    overrides.update({k: v for k, v in extra.items() if v is not None})
    try:
        file_values = config_mod.read_config(args.config) if args.config else {}
        cfg, table = config_mod.resolve(file_values, overrides, args.seed)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc.args[0] if exc.args else exc)) from None
    if args.print_config:
        print(config_mod.format_config(table))
        print()
    return cfg, int(table["report.decimal_places"])


def _write_indices(path, mask):
    Path(path).write_text("".join(f"{i}\n" for i in np.flatnonzero(mask)))


def _append_csv(path, header, rows):
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if fresh:
            w.writerow(header)
        w.writerows(rows)


def cmd_gensynth(args):
    ds, truth = gen_synthetic(args.n, args.d, args.k, args.classes, args.noise, args.seed,
                              name=Path(args.out).stem)
    out = Path(args.out)
    mask_path = out.with_name(out.name + ".mask")
    try:
        write_csv(ds, out)
        _write_indices(mask_path, truth)
    except OSError as exc:
        raise DataError(f"cannot write {exc.filename}: {exc.strerror}") from None
    print(out)
    print(mask_path)
    return EXIT_OK


def cmd_select(args):
    cfg, _ = _resolve_config(args, **{"run.algorithm": args.algorithm, "run.jobs": args.jobs})
    ds = minmax_normalize(load_csv(args.data, nan_replacement=_nan_policy(args.nan)))
    objective = cfg.objective.build(ds, cfg.net, cfg.seed)
    start = time.perf_counter()
    result = run_search(cfg.algorithm, cfg.search_params, objective, ds.n_features, jobs=cfg.jobs)
    elapsed = time.perf_counter() - start
    mask_out = args.mask_out or f"{args.data}.{cfg.algorithm}.mask"
    _write_indices(mask_out, result.best_mask)
    if args.trace:
        _append_csv(args.trace, ("iteration", "best_fitness", "popcount"),
                    [(t, repr(f), k) for t, f, k in result.trace])
    print(f"reduced attributes: {result.n_selected} of {ds.n_features}")
    print(f"best fitness: {result.best_fitness:.6f}")
    print(f"selection time: {elapsed:.2f} s")
    print(f"mask: {mask_out}")
    return EXIT_OK


def cmd_run(args):
    cfg, decimals = _resolve_config(args, **{"run.algorithm": args.algorithm, "run.jobs": args.jobs})
    nan = _nan_policy(args.nan)
    ds = load_csv(args.data, nan_replacement=nan)
    test = None
    if args.test:
        test = align_labels(load_csv(args.test, nan_replacement=nan), ds.class_names)
    report = run_pipeline(ds, cfg, test=test)
    timing = not args.no_timing
    print(format_table([report], timing, decimals))
    if args.out:
        _append_csv(args.out, REPORT_COLUMNS, [report.csv_row(timing, decimals)])
    return EXIT_OK


def cmd_bench(args):
    algos = ["firefly", "elephant"] if args.algorithm == "both" else [args.algorithm]
    cfgs = []
    for a in algos:
        cfg, decimals = _resolve_config(args, **{"run.algorithm": a})
        args.print_config = False
        cfgs.append(cfg)
    try:
        reports = bench(args.manifest, cfgs, jobs=args.jobs, nan_replacement=_nan_policy(args.nan))
    except OSError as exc:
        raise DataError(f"cannot read manifest: {exc}") from None
    timing = not args.no_timing
    print(format_table(reports, timing, decimals))
    if args.out:
        Path(args.out).write_text(reports_to_csv(reports, timing, decimals))
    failed = [r for r in reports if not r.ok]
    for r in failed:
        print(f"failed: {r.dataset} ({r.algorithm}): {r.error}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


COMMANDS = {"gensynth": cmd_gensynth, "select": cmd_select, "run": cmd_run, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValueError) as exc:
        print(f"genesift: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"genesift: {exc}", file=sys.stderr)
        return EXIT_DATA if exc.stage == "load" else EXIT_RUNTIME
    except (DataError, ParseError, MaskError, OSError) as exc:
        print(f"genesift: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GenesiftError as exc:
        print(f"genesift: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
