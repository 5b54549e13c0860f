"""Command-line entry point: ``sogpfm run | compare | selftest``."""

import argparse
import logging
import os
import sys

from .bench import ExperimentConfig, TASKS, compare_schemes, run_experiment, write_csv
from .control import load_bank, save_bank
from .selftest import run_selftest


def _load_config(args, **extra):
    overrides = dict(h=args.h, seed=args.seed, out=args.out, **extra)
    if args.config:
        return ExperimentConfig.from_file(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def _print_run(result, out=print):
    m = result.metrics
    out(f"scheme={result.config.scheme} seed={result.config.seed} "
        f"pooled tracking RMSE: task1={m.pooled['task1']:.4e} task2={m.pooled['task2']:.4e} "
        f"total={m.pooled['total']:.4e}")
    out(f"{'task':<6} {'joint':>5} {'tracking_rmse':>14} {'modeling_rmse':>14} {'deletions':>9}")
    for task in TASKS:
        row = m.table[task]
        for j in range(len(row["tracking_rmse"])):
            out(f"{task:<6} {j + 1:>5} {row['tracking_rmse'][j]:>14.4e} "
                f"{row['modeling_rmse'][j]:>14.4e} {row['deletions'][j]:>9d}")
    out(f"step wall time: mean {m.step_time['mean'] * 1e6:.0f} us, max {m.step_time['max'] * 1e6:.0f} us")


def cmd_run(args):
    cfg = _load_config(args, scheme=args.scheme)
    bank = None
    if args.load_models:
        bank = load_bank(cfg.controller_config(), args.load_models)
    result = run_experiment(cfg, bank=bank)
    write_csv(result, cfg.out)
    if args.save_models and result.bank is not None:
        save_bank(result.bank, args.save_models)
    _print_run(result)
    print(f"wrote {os.path.join(cfg.out, 'trace.csv')}, summary.csv, windows.csv")
    return 0


def cmd_compare(args):
    cfg = _load_config(args)
    comp = compare_schemes(cfg, out=cfg.out, jobs=args.jobs)
    header, rows = comp.table_rows()
    print("tracking RMSE per joint (rad)")
    print("  ".join(f"{h:>12}" for h in header))
    for row in rows:
        print("  ".join([f"{row[0]:>12}"] + [f"{v:>12.4e}" for v in row[1:]]))
    for task, scheme in comp.winners.items():
        print(f"winner {task}: {scheme}")
    for scheme, err in comp.errors.items():
        print(f"error: scheme {scheme} failed: {err}", file=sys.stderr)
    return 1 if comp.errors else 0


def cmd_selftest(args):
    return 0 if run_selftest(seed=args.seed or 0) else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sogpfm", description="Sparse online GP deletion-policy benchmark on a two-link arm."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value experiment file")
        p.add_argument("--h", type=int, help="forgetting period for the fs scheme")
        p.add_argument("--seed", type=int, help="noise seed")
        p.add_argument("--out", help="output directory")

    run = sub.add_parser("run", help="run one scheme")
    common(run)
    run.add_argument("--scheme", choices=("pis", "ops", "fs", "pd"), help="deletion policy, or pd for no learning")
    run.add_argument("--save-models", metavar="DIR", help="write final GP snapshots here")
    run.add_argument("--load-models", metavar="DIR", help="start from GP snapshots in DIR")
    run.set_defaults(func=cmd_run)

    compare = sub.add_parser("compare", help="run pis, ops and fs with identical settings")
    common(compare)
    compare.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    compare.set_defaults(func=cmd_compare)

    selftest = sub.add_parser("selftest", help="run the invariant checks")
    selftest.add_argument("--seed", type=int, default=0)
    selftest.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}".splitlines()[0], file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
