"""Command-line entry point: generate, labels, train, solve, compare, sepbench."""

from __future__ import annotations

import argparse
import glob
import logging
import sys
from pathlib import Path

import numpy as np

from .engine import (
    SEPARATORS,
    SUMMARY_HEADER,
    compare,
    cutting_plane,
    make_separator,
    read_ub_file,
    separation_metrics,
    write_rows,
)
from .errors import FormatError, ShapeError, ValidationError
from .instances import generate_random, read_cvrplib, write_cvrplib

log = logging.getLogger("rcisep")

METRIC_HEADER = ["separator", "graphs", "avg_violation", "avg_cuts", "total_cuts", "success_rate"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(suppress=False):
    # subcommands repeat the global flags; SUPPRESS keeps them from
    # overwriting values given before the subcommand name
    def d(value):
        return argparse.SUPPRESS if suppress else value

    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--max-iter", type=int, default=d(None), help="cutting-plane iteration limit")
    p.add_argument("--time-limit", type=float, default=d(None), help="seconds per cutting-plane run")
    p.add_argument("--checkpoint", default=d(None), help="GNN parameter file")
    p.add_argument("--out", default=d(None), help="output file or directory")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def build_parser():
    parser = _Parser(prog="rcisep", description=__doc__, parents=[_common()])
    common = _common(suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="write random instances")
    g.add_argument("--n", type=int, nargs="+", required=True, help="customer counts")
    g.add_argument("--count", type=int, default=1, help="instances per size")

    lb = sub.add_parser("labels", parents=[common], help="collect exact labels into a dataset")
    lb.add_argument("--instances", nargs="*", default=[], help="instance files or globs")
    lb.add_argument("--random", type=int, default=0, help="also generate this many random instances")
    lb.add_argument("--n-min", type=int, default=10)
    lb.add_argument("--n-max", type=int, default=20)
    lb.add_argument("--violated-only", action="store_true", help="drop non-violated optima")

    t = sub.add_parser("train", parents=[common], help="train the GNN on a dataset")
    t.add_argument("--dataset", required=True)
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--lr", type=float, default=5e-4)
    t.add_argument("--save-epochs", action="store_true", help="also write one checkpoint per epoch")

    s = sub.add_parser("solve", parents=[common], help="cutting-plane run on one instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--separator", choices=SEPARATORS, default="exact")

    c = sub.add_parser("compare", parents=[common], help="instances x separators summary")
    c.add_argument("--instances", nargs="+", required=True)
    c.add_argument("--separators", default="exact,components")
    c.add_argument("--ub-file", default=None, help="lines name,value of best-known upper bounds")
    c.add_argument("--workers", type=int, default=1)

    b = sub.add_parser("sepbench", parents=[common], help="separation metrics on a dataset")
    b.add_argument("--dataset", required=True)
    b.add_argument("--separators", default="exact,components,greedy")
    return parser


def _expand(patterns):
    paths = []
    for pat in patterns:
        hits = sorted(glob.glob(pat))
        if not hits:
            raise ValidationError(f"no instance file matches {pat!r}")
        paths += hits
    return paths


def _separators(names, checkpoint):
    params = None
    out = {}
    for name in [n.strip() for n in names.split(",") if n.strip()]:
        if name == "neural" and params is None:
            params = _load_params(checkpoint)
        out[name] = make_separator(name, params)
    return out


def _load_params(checkpoint):
    from .gnn import GnnParams

    if not checkpoint:
        raise ValidationError("--separator neural needs --checkpoint")
    if not Path(checkpoint).exists():
        raise ValidationError(f"checkpoint {checkpoint} not found")
    return GnnParams.load(checkpoint)


def cmd_generate(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    for n in args.n:
        for k in range(args.count):
            inst = generate_random(n, args.seed + k)
            write_cvrplib(inst, out / f"{inst.name}.vrp")
            print(out / f"{inst.name}.vrp")


def cmd_labels(args):
    from .training import collect_labels, save_dataset

    instances = [read_cvrplib(p) for p in _expand(args.instances)]
    rng = np.random.default_rng(args.seed)
    for k in range(args.random):
        instances.append(generate_random(int(rng.integers(args.n_min, args.n_max + 1)), args.seed * 100_003 + k))
    data = collect_labels(instances, max_iter=args.max_iter or 50, keep_nonviolated=not args.violated_only)
    save_dataset(data, args.out or "labels.jsonl")
    print(f"{len(data)} samples from {len(instances)} instances -> {args.out or 'labels.jsonl'}")


def cmd_train(args):
    from .training import TrainConfig, load_dataset, train

    data = load_dataset(args.dataset)
    out = Path(args.out or "params.json")
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed)

    def on_epoch(epoch, params, loss):
        print(f"epoch {epoch + 1}: loss {loss:.6f}")
        if args.save_epochs:
            params.save(out.with_name(f"{out.stem}.epoch{epoch + 1:02d}{out.suffix}"), {"epoch": epoch + 1})

    res = train(data, cfg, on_epoch=on_epoch)
    res.params.save(out, {"epochs": cfg.epochs, "epoch_losses": res.epoch_losses})
    print(f"wrote {out}")


def cmd_solve(args):
    inst = read_cvrplib(args.instance)
    params = _load_params(args.checkpoint) if args.separator == "neural" else None
    sep = make_separator(args.separator, params)
    trace = cutting_plane(inst, sep, max_iter=args.max_iter, time_limit=args.time_limit, name=args.separator)
    out = args.out or f"{inst.name}.{args.separator}.csv"
    trace.write_csv(out)
    print(f"{inst.name}: LB {trace.final_lb:.3f} after {trace.iterations} iterations ({trace.termination}) -> {out}")


def cmd_compare(args):
    instances = [read_cvrplib(p) for p in _expand(args.instances)]
    seps = _separators(args.separators, args.checkpoint)
    ubs = read_ub_file(args.ub_file) if args.ub_file else {}
    rows = compare(instances, seps, ubs, args.max_iter, args.time_limit, args.workers)
    header = SUMMARY_HEADER if ubs else [h for h in SUMMARY_HEADER if h != "gap_pct"]
    for r in rows:
        if not ubs:
            r.pop("gap_pct")
    write_rows(rows, header, args.out or "summary.csv")
    print(f"{len(rows)} runs -> {args.out or 'summary.csv'}")


def cmd_sepbench(args):
    from .training import load_dataset

    data = load_dataset(args.dataset)
    rows = []
    for name, sep in _separators(args.separators, args.checkpoint).items():
        m = separation_metrics(data, sep)
        rows.append({"separator": name, **m})
        print(f"{name}: {m}")
    write_rows(rows, METRIC_HEADER, args.out or "sepbench.csv")


COMMANDS = {
    "generate": cmd_generate,
    "labels": cmd_labels,
    "train": cmd_train,
    "solve": cmd_solve,
    "compare": cmd_compare,
    "sepbench": cmd_sepbench,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ValidationError, FormatError, ShapeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error: %s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
