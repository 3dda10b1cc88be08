"""Grid sweeps over (R, I) cells and delimited result reporting.

A sweep runs the trial battery for every combination of mapping count
and iteration depth on one task, tagging each cell with a seed derived
from the master seed and the cell coordinates. Because the derivation
depends only on those values, a cell's result is reproducible in
isolation and independent of grid shape, submission order, or worker
count; rerunning a sweep with the same arguments yields byte-identical
output files.

Results are plain row dictionaries in a fixed column order, written as
CSV and JSON. Reporting also emits a speedup table against the stored
recurrent-network baselines for whichever rows have one, and failure
grid figures per task.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from carc import ca
from carc.memtasks import TaskSpec, run_trials
from carc.opcount import ESN_BASELINE_FLOPS, count_ops
from carc.readout import DEFAULT_RIDGE
from carc.reservoir import ReservoirConfig

CSV_FIELDS = (
    "task", "rule", "t0", "r", "i", "n_trials", "n_failures",
    "fail_pct", "ci_lo_pct", "ci_hi_pct", "ca_bit_ops", "seed",
)

_FLOAT_FIELDS = ("fail_pct", "ci_lo_pct", "ci_hi_pct")


def rule_label(rule) -> str:
    return rule if isinstance(rule, str) else str(int(rule))


def cell_seed(master_seed: int, rule, r: int, i: int, t0: int) -> int:
    """Deterministic per-cell seed, independent of grid layout."""
    tag = 256 if rule == ca.LIFE else int(rule)
    ss = np.random.SeedSequence((int(master_seed), tag, int(r), int(i), int(t0)))
    return int(ss.generate_state(1, np.uint64)[0])


def sweep(rule, spec: TaskSpec, r_list, i_list, n_trials: int, seed: int,
          ridge: float = DEFAULT_RIDGE, max_workers: int | None = None,
          ) -> list[dict]:
    """Failure statistics for every (R, I) cell of a grid.

    Returns one row dict per cell in sorted order. Cells run on a
    bounded thread pool; each carries its own derived seed, so the
    aggregate is identical however the pool schedules them.
    """
    r_list, i_list = list(r_list), list(i_list)
    if not r_list or not i_list:
        raise ValueError("sweep needs at least one R and one I value")
    cells = [(r, i) for r in r_list for i in i_list]

    def one(cell):
        r, i = cell
        cfg = ReservoirConfig(rule=rule, n_mappings=r, iterations=i,
                              input_dim=spec.input_dim)
        cs = cell_seed(seed, rule, r, i, spec.t0)
        summary = run_trials(cfg, spec, n_trials, cs, ridge=ridge)
        return {
            "task": spec.name,
            "rule": rule_label(rule),
            "t0": spec.t0,
            "r": r,
            "i": i,
            "n_trials": summary.n_trials,
            "n_failures": summary.n_failures,
            "fail_pct": summary.fail_pct,
            "ci_lo_pct": summary.ci_lo_pct,
            "ci_hi_pct": summary.ci_hi_pct,
            "ca_bit_ops": count_ops(cfg, spec).ca_bit_ops,
            "seed": cs,
        }

    workers = max_workers or min(len(cells), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(one, cells))
    return sort_rows(rows)


def sort_rows(rows: list[dict]) -> list[dict]:
    return sorted(rows, key=lambda d: (d["task"], d["rule"], d["t0"],
                                       d["r"], d["i"]))


def rows_to_csv(rows: list[dict]) -> str:
    """Render rows in the stable CSV schema (4-decimal percentages)."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        out = dict(row)
        for k in _FLOAT_FIELDS:
            out[k] = f"{row[k]:.4f}"
        writer.writerow(out)
    return buf.getvalue()


def rows_from_csv(text: str) -> list[dict]:
    """Parse :func:`rows_to_csv` output back into typed rows."""
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for k in CSV_FIELDS:
            v = rec[k]
            if k in _FLOAT_FIELDS:
                row[k] = float(v)
            elif k in ("task", "rule"):
                row[k] = v
            else:
                row[k] = int(v)
        rows.append(row)
    return rows


def rows_to_json(rows: list[dict]) -> str:
    return json.dumps({"schema": list(CSV_FIELDS), "rows": rows}, indent=2) + "\n"


def rows_from_json(text: str) -> list[dict]:
    return json.loads(text)["rows"]


def speedup_rows(rows: list[dict]) -> list[dict]:
    """Baseline-to-reservoir op ratios for rows with a known baseline."""
    out = []
    for row in rows:
        base = ESN_BASELINE_FLOPS.get((row["task"], row["t0"]))
        if base is None:
            continue
        out.append({
            "task": row["task"], "t0": row["t0"],
            "r": row["r"], "i": row["i"],
            "ca_bit_ops": row["ca_bit_ops"], "esn_flops": base,
            "speedup": base / row["ca_bit_ops"],
        })
    return out


_SPEEDUP_FIELDS = ("task", "t0", "r", "i", "ca_bit_ops", "esn_flops", "speedup")


def speedup_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=_SPEEDUP_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        out = dict(row)
        out["speedup"] = f"{row['speedup']:.2f}"
        writer.writerow(out)
    return buf.getvalue()


def report(rows: list[dict], out_dir, formats=("csv", "json"),
           figures: bool = True) -> list[str]:
    """Write results.csv / results.json, the speedup table, and one
    failure-grid figure per (task, rule, t0) group.

    Refuses empty results before touching the filesystem and returns
    the paths written.
    """
    rows = sort_rows(rows)
    if not rows:
        raise ValueError("no sweep results to report")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def emit(name, text):
        path = os.path.join(out_dir, name)
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as e:
            raise OSError(f"cannot write report file {path}: {e}") from e
        written.append(path)

    if "csv" in formats:
        emit("results.csv", rows_to_csv(rows))
    if "json" in formats:
        emit("results.json", rows_to_json(rows))
    emit("speedup.csv", speedup_to_csv(speedup_rows(rows)))
    if figures:
        from carc import plots

        groups = sorted({(d["task"], d["rule"], d["t0"]) for d in rows})
        for task, rule, t0 in groups:
            sub = [d for d in rows
                   if (d["task"], d["rule"], d["t0"]) == (task, rule, t0)]
            name = f"grid_{task}_rule{rule}_t{t0}.png"
            path = os.path.join(out_dir, name)
            plots.failure_grid(sub, path)
            written.append(path)
    return written
