"""Long-range sequence memory benchmarks.

A task presents a pattern of symbols, holds the reservoir through a
long distractor period, then cues it to replay the pattern. Channels
are one-hot per step: the first ``n_symbols`` input channels carry the
pattern symbol, the next is the distractor held active through the
waiting period (and through recall, on the input side), and the last
fires once as the recall cue. Output channels are the pattern symbols
plus a waiting channel that must stay active everywhere except the
replay steps.

A trial draws fresh mappings, runs every training sequence through the
reservoir, fits one readout on all (sequence, step) rows, and scores
the same rows: the trial succeeds only if every bit of every step of
every sequence is correct after thresholding. Failure rates over many
trials are reported with Wilson 95% confidence intervals, matching the
all-or-nothing convention of the published grids this reproduces.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from carc.opcount import count_ops
from carc.readout import DEFAULT_RIDGE, fit, pack_features, predict_batch
from carc.reservoir import ReservoirConfig, process_batch, with_seed

# Feature matrices above this many dense bytes are bit-packed before
# fitting so the row Gram has the machine's memory to itself.
_PACK_BYTES = 512 << 20


@dataclass(frozen=True)
class TaskSpec:
    """Shape of one memory benchmark.

    ``pattern_len`` symbols are drawn from ``n_symbols`` values;
    ``t0`` is the distractor period. ``n_train`` limits how many of the
    ``n_symbols ** pattern_len`` sequences a trial uses (None = all).
    """

    name: str
    pattern_len: int
    n_symbols: int
    t0: int
    n_train: int | None = None

    def __post_init__(self):
        if self.pattern_len < 1:
            raise ValueError("pattern_len must be >= 1")
        if self.n_symbols < 2:
            raise ValueError("n_symbols must be >= 2")
        if self.t0 < 1:
            raise ValueError("t0 must be >= 1")
        if self.n_train is not None and self.n_train < 1:
            raise ValueError("n_train must be >= 1 when given")

    @property
    def input_dim(self) -> int:
        return self.n_symbols + 2  # symbols + distractor + cue

    @property
    def output_dim(self) -> int:
        return self.n_symbols + 1  # symbols + waiting

    @property
    def total_steps(self) -> int:
        return 2 * self.pattern_len + self.t0 + 1

    @property
    def n_patterns(self) -> int:
        return self.n_symbols**self.pattern_len

    @property
    def n_sequences(self) -> int:
        if self.n_train is None:
            return self.n_patterns
        return min(self.n_train, self.n_patterns)


def five_bit(t0: int = 200) -> TaskSpec:
    """Recall 5 binary symbols after a distractor period: 32 sequences."""
    return TaskSpec(name="five_bit", pattern_len=5, n_symbols=2, t0=t0)


def twenty_bit(t0: int = 200, n_train: int = 120) -> TaskSpec:
    """Recall 10 symbols from a 5-letter alphabet (~20 bits of pattern)."""
    return TaskSpec(name="twenty_bit", pattern_len=10, n_symbols=5, t0=t0,
                    n_train=n_train)


def b_bit(n_bits: int, t0: int = 200) -> TaskSpec:
    """The 5-bit family at an arbitrary pattern length."""
    return TaskSpec(name=f"{n_bits}_bit", pattern_len=n_bits, n_symbols=2, t0=t0)


def gen_sequence(spec: TaskSpec, pattern) -> tuple[np.ndarray, np.ndarray]:
    """Inputs and targets for one pattern, both (total_steps, channels).

    Layout over the ``2P + t0 + 1`` steps: P pattern steps, t0
    distractor steps, one cue step, then P recall steps during which
    the distractor stays on at the input and the targets replay the
    pattern. The waiting output channel is active at every other step.
    """
    pat = np.asarray(pattern, dtype=np.int64)
    p, s = spec.pattern_len, spec.n_symbols
    if pat.shape != (p,):
        raise ValueError(f"pattern must have length {p}")
    if pat.min(initial=0) < 0 or pat.max(initial=0) >= s:
        raise ValueError(f"pattern symbols must be in 0..{s - 1}")
    t_total = spec.total_steps
    inputs = np.zeros((t_total, spec.input_dim), dtype=np.uint8)
    targets = np.zeros((t_total, spec.output_dim), dtype=np.uint8)
    steps = np.arange(t_total)
    inputs[steps[:p], pat] = 1
    inputs[p : p + spec.t0, s] = 1  # distractor through the waiting period
    inputs[p + spec.t0, s + 1] = 1  # cue
    inputs[p + spec.t0 + 1 :, s] = 1  # distractor stays on during recall
    targets[:, s] = 1  # waiting channel everywhere ...
    recall = steps[p + spec.t0 + 1 :]
    targets[recall, s] = 0  # ... except the replay steps
    targets[recall, pat] = 1
    return inputs, targets


def enumerate_patterns(spec: TaskSpec, seed=None) -> np.ndarray:
    """Training patterns as an (n_sequences, pattern_len) array.

    Exhaustive in lexicographic order when the task trains on every
    pattern; otherwise a uniform sample of distinct patterns drawn
    from ``seed``.
    """
    p, s = spec.pattern_len, spec.n_symbols
    if spec.n_train is None or spec.n_train >= spec.n_patterns:
        return np.array(list(itertools.product(range(s), repeat=p)), dtype=np.int64)
    rng = np.random.default_rng(seed)
    codes = rng.choice(spec.n_patterns, size=spec.n_train, replace=False)
    out = np.zeros((spec.n_train, p), dtype=np.int64)
    for i in range(p - 1, -1, -1):
        out[:, i] = codes % s
        codes //= s
    return out


def task_arrays(spec: TaskSpec, patterns) -> tuple[np.ndarray, np.ndarray]:
    """Stacked (B, T, channels) inputs and targets for many patterns."""
    pats = np.asarray(patterns, dtype=np.int64)
    inputs = np.zeros((len(pats), spec.total_steps, spec.input_dim), dtype=np.uint8)
    targets = np.zeros((len(pats), spec.total_steps, spec.output_dim), dtype=np.uint8)
    for b, pat in enumerate(pats):
        inputs[b], targets[b] = gen_sequence(spec, pat)
    return inputs, targets


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one trial: one mapping draw, one fit, one evaluation."""

    success: bool
    bit_errors: int
    n_sequences: int
    ca_bit_ops: int  # closed-form cell updates for one sequence
    wall_time: float
    seed: int
    config: ReservoirConfig


def _trial_seeds(seed: int) -> tuple[int, int]:
    map_ss, pat_ss = np.random.SeedSequence(seed).spawn(2)
    return (int(map_ss.generate_state(1, np.uint64)[0]),
            int(pat_ss.generate_state(1, np.uint64)[0]))


def run_trial(cfg: ReservoirConfig, spec: TaskSpec, seed: int,
              ridge: float = DEFAULT_RIDGE) -> TrialResult:
    """Run one all-or-nothing trial of a memory task.

    ``cfg`` fixes the architecture; the mapping draw and (for sampled
    tasks) the training patterns are derived from ``seed``, so equal
    seeds reproduce trials exactly.
    """
    if cfg.input_dim != spec.input_dim:
        raise ValueError(
            f"config expects {cfg.input_dim} input channels,"
            f" task provides {spec.input_dim}"
        )
    start = time.perf_counter()
    map_seed, pat_seed = _trial_seeds(seed)
    cfg_t = with_seed(cfg, map_seed)
    patterns = enumerate_patterns(spec, seed=pat_seed)
    inputs, targets = task_arrays(spec, patterns)
    b, t_total = inputs.shape[0], inputs.shape[1]
    rows_x = process_batch(cfg_t, inputs).reshape(b * t_total, cfg.feature_dim)
    rows_y = targets.reshape(b * t_total, spec.output_dim)
    if rows_x.nbytes > _PACK_BYTES:
        rows_x = pack_features(rows_x)
    model = fit(rows_x, rows_y, ridge=ridge)
    preds = predict_batch(model, rows_x)
    bit_errors = int(np.count_nonzero(preds != rows_y))
    return TrialResult(
        success=bit_errors == 0,
        bit_errors=bit_errors,
        n_sequences=b,
        ca_bit_ops=count_ops(cfg, spec).ca_bit_ops,
        wall_time=time.perf_counter() - start,
        seed=seed,
        config=cfg_t,
    )


def wilson_interval(k: int, n: int, z: float = 1.959963984540054
                    ) -> tuple[float, float]:
    """Wilson score 95% interval for a binomial proportion, as fractions."""
    if n < 1:
        raise ValueError("need at least one observation")
    p = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass(frozen=True)
class TrialsSummary:
    """Failure statistics over repeated trials of one configuration."""

    n_trials: int
    n_failures: int
    fail_pct: float
    ci_lo_pct: float
    ci_hi_pct: float
    seed: int
    config: ReservoirConfig
    trials: tuple[TrialResult, ...] = field(repr=False, default=())

    @property
    def wall_time(self) -> float:
        return sum(t.wall_time for t in self.trials)


def trial_seeds(seed: int, n_trials: int) -> list[int]:
    """Per-trial seeds derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(n_trials)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def run_trials(cfg: ReservoirConfig, spec: TaskSpec, n_trials: int, seed: int,
               ridge: float = DEFAULT_RIDGE, stop_on_failure: bool = False,
               ) -> TrialsSummary:
    """Repeat :func:`run_trial` with derived seeds and summarize.

    ``stop_on_failure`` aborts at the first failed trial (used by the
    minimal-size search, which only cares whether failures are zero);
    the summary then covers the trials actually run.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    results = []
    for ts in trial_seeds(seed, n_trials):
        results.append(run_trial(cfg, spec, ts, ridge=ridge))
        if stop_on_failure and not results[-1].success:
            break
    n_run = len(results)
    n_fail = sum(1 for r in results if not r.success)
    lo, hi = wilson_interval(n_fail, n_run)
    return TrialsSummary(
        n_trials=n_run, n_failures=n_fail, fail_pct=100.0 * n_fail / n_run,
        ci_lo_pct=100.0 * lo, ci_hi_pct=100.0 * hi, seed=seed, config=cfg,
        trials=tuple(results),
    )


def failure_rate(cfg: ReservoirConfig, spec: TaskSpec, n_trials: int,
                 seed: int, ridge: float = DEFAULT_RIDGE) -> float:
    """Failure percentage of a configuration over ``n_trials`` trials."""
    return run_trials(cfg, spec, n_trials, seed, ridge=ridge).fail_pct


DEFAULT_R_GRID = (1, 2, 4, 8, 16, 32, 64, 128)
DEFAULT_I_GRID = (1, 2, 4, 8, 16, 32, 64)


@dataclass(frozen=True)
class MinSizeResult:
    """Outcome of the minimal-reservoir search for one task."""

    found: bool
    n_mappings: int | None
    iterations: int | None
    product: int | None
    n_trials: int
    cells: tuple[tuple[int, int, int], ...]  # (R, I, failures) in search order


def min_reservoir_size(base_cfg: ReservoirConfig, spec: TaskSpec,
                       n_trials: int = 8, seed: int = 0,
                       r_grid=DEFAULT_R_GRID, i_grid=DEFAULT_I_GRID,
                       ridge: float = DEFAULT_RIDGE) -> MinSizeResult:
    """Smallest (R, I) by product R*I whose trials all succeed.

    Cells are tried in increasing R*I (ties: smaller R first); within a
    cell the trials stop at the first failure. ``base_cfg`` supplies
    everything except ``n_mappings`` and ``iterations``.
    """
    cells = sorted(
        ((r, i) for r in r_grid for i in i_grid),
        key=lambda ri: (ri[0] * ri[1], ri[0], ri[1]),
    )
    checked = []
    for r, i in cells:
        cfg = replace(base_cfg, n_mappings=r, iterations=i)
        summary = run_trials(cfg, spec, n_trials, seed, ridge=ridge,
                             stop_on_failure=True)
        checked.append((r, i, summary.n_failures))
        if summary.n_failures == 0 and summary.n_trials == n_trials:
            return MinSizeResult(
                found=True, n_mappings=r, iterations=i, product=r * i,
                n_trials=n_trials, cells=tuple(checked),
            )
    return MinSizeResult(found=False, n_mappings=None, iterations=None,
                         product=None, n_trials=n_trials, cells=tuple(checked))
