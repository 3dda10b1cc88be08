"""Command line driver.

Subcommands
-----------
sweep      failure-rate grid over (R, I) cells, with report files
trial      one all-or-nothing trial of a memory task
minsize    smallest reservoir (by R*I) that solves a task
concepts   truth-table demo of the additive-rule concept algebra
ops        closed-form operation counts and baseline speedup

``--seed`` defaults to the ``CA_RC_SEED`` environment variable when it
is set. Exit status is 0 on success and 2 for invalid configurations
or I/O failures; ``trial`` additionally exits 1 when the trial fails
the task, so scripts can branch on the outcome.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys

import numpy as np

from carc import ca
from carc.concepts import (ConceptConfig, and_, not_, or_, reservoir_of,
                           xor_c)
from carc.memtasks import (DEFAULT_I_GRID, DEFAULT_R_GRID, b_bit, five_bit,
                           min_reservoir_size, run_trial, twenty_bit)
from carc.metering import meter
from carc.opcount import count_ops, esn_baseline
from carc.readout import DEFAULT_RIDGE
from carc.reservoir import ReservoirConfig, process_sequence, with_seed
from carc.sweep import report, rows_to_csv, rows_to_json, sweep
from carc.memtasks import gen_sequence, enumerate_patterns

FORMATS = ("csv", "json")


def _parse_rule(text: str):
    if text == ca.LIFE:
        return ca.LIFE
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"rule must be an elementary rule id or {ca.LIFE!r}, got {text!r}"
        )


def _parse_task(name: str, t0: int):
    if name == "five_bit":
        return five_bit(t0)
    if name == "twenty_bit":
        return twenty_bit(t0)
    m = re.fullmatch(r"(\d+)_bit", name)
    if m:
        return b_bit(int(m.group(1)), t0)
    raise ValueError(
        f"unknown task {name!r}: expected five_bit, twenty_bit, or <n>_bit"
    )


def _parse_grid(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty grid")
    return vals


def _default_seed() -> int:
    return int(os.environ.get("CA_RC_SEED", "0"))


def _emit(rows: list[dict], fields: tuple[str, ...], fmt: str) -> str:
    if fmt == "json":
        return json.dumps({"schema": list(fields), "rows": rows}, indent=2) + "\n"
    import csv as _csv
    import io

    buf = io.StringIO()
    writer = _csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_sweep(args) -> int:
    spec = _parse_task(args.task, args.t0)
    rows = sweep(args.rule, spec, args.r, args.i, args.trials, args.seed,
                 ridge=args.ridge)
    text = rows_to_csv(rows) if args.format == "csv" else rows_to_json(rows)
    sys.stdout.write(text)
    if args.out:
        written = report(rows, args.out)
        for path in written:
            print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_trial(args) -> int:
    spec = _parse_task(args.task, args.t0)
    cfg = ReservoirConfig(rule=args.rule, n_mappings=args.r,
                          iterations=args.i, input_dim=spec.input_dim)
    result = run_trial(cfg, spec, args.seed, ridge=args.ridge)
    row = {
        "task": spec.name, "rule": str(args.rule), "t0": spec.t0,
        "r": args.r, "i": args.i, "seed": args.seed,
        "success": int(result.success), "bit_errors": result.bit_errors,
        "n_sequences": result.n_sequences, "ca_bit_ops": result.ca_bit_ops,
        "wall_time": round(result.wall_time, 3),
    }
    fields = tuple(row)
    sys.stdout.write(_emit([row], fields, args.format))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        ext = "json" if args.format == "json" else "csv"
        path = os.path.join(args.out, f"trial.{ext}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_emit([row], fields, args.format))
        print(f"wrote {path}", file=sys.stderr)
        if not isinstance(args.rule, str):
            fig_path = os.path.join(
                args.out, f"spacetime_rule{args.rule}_r{args.r}_i{args.i}.png"
            )
            _spacetime_figure(cfg, spec, args.seed, fig_path)
            print(f"wrote {fig_path}", file=sys.stderr)
        else:
            print("spacetime figure skipped (2D rule)", file=sys.stderr)
    return 0 if result.success else 1


def _spacetime_figure(cfg, spec, seed, path) -> None:
    """Iteration-by-iteration lattice history of one training sequence."""
    from carc import plots

    pattern = enumerate_patterns(spec, seed=seed)[0]
    inputs, _ = gen_sequence(spec, pattern)
    feats = process_sequence(with_seed(cfg, seed), inputs)
    t = feats.shape[0]
    vol = (feats.reshape(t, cfg.n_mappings, cfg.iterations, -1)
           .transpose(0, 2, 1, 3)
           .reshape(t * cfg.iterations, -1))
    plots.spacetime(vol, path,
                    title=f"rule {cfg.rule}, R={cfg.n_mappings}, I={cfg.iterations}")


def cmd_minsize(args) -> int:
    spec = _parse_task(args.task, args.t0)
    base = ReservoirConfig(rule=args.rule, n_mappings=1, iterations=1,
                           input_dim=spec.input_dim)
    res = min_reservoir_size(base, spec, n_trials=args.trials, seed=args.seed,
                             r_grid=args.r, i_grid=args.i, ridge=args.ridge)
    rows = [{"r": r, "i": i, "failures": f} for r, i, f in res.cells]
    sys.stdout.write(_emit(rows, ("r", "i", "failures"), args.format))
    if res.found:
        print(f"minimal: R={res.n_mappings} I={res.iterations} "
              f"product={res.product} ({args.trials} trials clean)",
              file=sys.stderr)
    else:
        print("no grid cell passed every trial", file=sys.stderr)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        ext = "json" if args.format == "json" else "csv"
        path = os.path.join(args.out, f"minsize.{ext}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_emit(rows, ("r", "i", "failures"), args.format))
        print(f"wrote {path}", file=sys.stderr)
        from carc import plots

        fig = os.path.join(args.out, "minsize.png")
        plots.minsize_curve([(spec.name, res.product)], fig)
        print(f"wrote {fig}", file=sys.stderr)
    return 0 if res.found else 1


def cmd_concepts(args) -> int:
    if isinstance(args.rule, str):
        raise ValueError("the concept algebra needs an additive elementary rule")
    cfg = ConceptConfig(n_objects=args.objects, iterations=args.i,
                        rule=args.rule, n_copies=args.r)
    rng = np.random.default_rng(args.seed)
    size_a = int(rng.integers(1, args.objects))
    size_b = int(rng.integers(1, args.objects))
    sup_a = frozenset(int(v) for v in rng.choice(args.objects, size_a, replace=False))
    sup_b = frozenset(int(v) for v in rng.choice(args.objects, size_b, replace=False))
    a, b = reservoir_of(sup_a, cfg), reservoir_of(sup_b, cfg)
    with meter() as m:
        combos = {"or": or_(a, b), "and": and_(a, b), "xor": xor_c(a, b),
                  "not_a": not_(a)}
    rows = []
    for obj in range(args.objects):
        rows.append({
            "object": obj,
            "a": int(obj in a.support), "b": int(obj in b.support),
            **{k: int(obj in c.support) for k, c in combos.items()},
        })
    fields = ("object", "a", "b", "or", "and", "xor", "not_a")
    text = _emit(rows, fields, args.format)
    sys.stdout.write(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        ext = "json" if args.format == "json" else "csv"
        path = os.path.join(args.out, f"concepts.{ext}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {path}", file=sys.stderr)
    for name, c in combos.items():
        oracle = reservoir_of(c.support, cfg)
        if not np.array_equal(c.feature, oracle.feature):
            raise ValueError(f"feature algebra mismatch on {name}")
    print(f"feature checks: {' '.join(sorted(combos))} all match fresh "
          f"encodings; combine cost {m.ca_bit_ops} cell updates",
          file=sys.stderr)
    return 0


def cmd_ops(args) -> int:
    spec = _parse_task(args.task, args.t0)
    cfg = ReservoirConfig(rule=args.rule, n_mappings=args.r,
                          iterations=args.i, input_dim=spec.input_dim)
    ops = count_ops(cfg, spec)
    base = esn_baseline(spec)
    row = {
        "task": spec.name, "t0": spec.t0, "rule": str(args.rule),
        "r": args.r, "i": args.i, "total_steps": spec.total_steps,
        "ca_bit_ops": ops.ca_bit_ops,
        "readout_add_ops_max": ops.readout_add_ops,
        "esn_flops": base if base is not None else "",
        "speedup": round(base / ops.ca_bit_ops, 2) if base else "",
    }
    fields = tuple(row)
    text = _emit([row], fields, args.format)
    _write_or_print(text, args.out)
    return 0


def _add_common(sub, *, trials=False, grids=False, scalars=False):
    sub.add_argument("--rule", type=_parse_rule, default=90,
                     help="elementary rule id or 'life' (default 90)")
    sub.add_argument("--task", default="five_bit",
                     help="five_bit, twenty_bit, or <n>_bit (default five_bit)")
    sub.add_argument("--t0", type=int, default=200,
                     help="distractor period (default 200)")
    if grids:
        sub.add_argument("--r", type=_parse_grid, default=list(DEFAULT_R_GRID),
                         help="comma-separated mapping counts")
        sub.add_argument("--i", type=_parse_grid, default=list(DEFAULT_I_GRID),
                         help="comma-separated iteration depths")
    if scalars:
        sub.add_argument("--r", type=int, default=32, help="mapping count")
        sub.add_argument("--i", type=int, default=16, help="iteration depth")
    if trials:
        sub.add_argument("--trials", type=int, default=8,
                         help="trials per grid cell (default 8)")
    sub.add_argument("--seed", type=int, default=_default_seed(),
                     help="master seed (default $CA_RC_SEED or 0)")
    sub.add_argument("--out", default=None, help="output directory or file")
    sub.add_argument("--format", choices=FORMATS, default="csv",
                     help="delimited output format (default csv)")
    sub.add_argument("--ridge", type=float, default=DEFAULT_RIDGE,
                     help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carc",
        description="cellular automaton reservoir benchmarks and reports",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("sweep", help="failure-rate grid over (R, I)")
    _add_common(p, trials=True, grids=True)
    p.set_defaults(func=cmd_sweep)

    p = subs.add_parser("trial", help="run one task trial")
    _add_common(p, scalars=True)
    p.set_defaults(func=cmd_trial)

    p = subs.add_parser("minsize", help="search the smallest passing reservoir")
    _add_common(p, trials=True, grids=True)
    p.set_defaults(func=cmd_minsize)

    p = subs.add_parser("concepts", help="concept algebra truth tables")
    _add_common(p, scalars=True)
    p.add_argument("--objects", type=int, default=8,
                   help="universe size for the demo (default 8)")
    p.set_defaults(func=cmd_concepts, r=1, i=4)

    p = subs.add_parser("ops", help="closed-form op counts and speedup")
    _add_common(p, scalars=True)
    p.set_defaults(func=cmd_ops)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
