"""Binary cellular automaton engines.

Two families:

* elementary 1D automata, rules 0..255 over a row of cells with
  radius-1 neighborhoods;
* the 2D Life automaton (birth on 3 live neighbors, survival on 2 or 3)
  over a grid with Moore neighborhoods.

States are numpy ``uint8`` arrays holding 0/1 values. The cell axis is
the last axis (1D) or the last two axes (2D); any leading axes are
treated as a batch and stepped in lockstep, which is how the reservoir
layer evolves many segments at once.

Boundary handling is selectable: ``"periodic"`` wraps the lattice into
a ring/torus, ``"zero"`` reads permanently-dead cells beyond the edge.
"""

from __future__ import annotations

import numpy as np

from carc.metering import add_ca_ops

BOUNDARIES = ("periodic", "zero")

#: value of ``rule`` selecting the 2D Life engine in :func:`evolve`
LIFE = "life"


def rule_table(rule_id: int) -> np.ndarray:
    """Return the 8-entry lookup table for an elementary rule.

    Entry ``n`` is the next state of a cell whose neighborhood
    ``(left, center, right)`` reads as the 3-bit number ``n``
    (left is the high bit). That is exactly the binary expansion of
    ``rule_id``, so ``table[n] == (rule_id >> n) & 1``.
    """
    rule_id = int(rule_id)
    if not 0 <= rule_id <= 255:
        raise ValueError(f"rule_id must be in 0..255, got {rule_id}")
    return np.array([(rule_id >> n) & 1 for n in range(8)], dtype=np.uint8)


def _table_to_id(table: np.ndarray) -> int:
    return int(np.dot(table.astype(np.int64), 1 << np.arange(8)))


def _as_table(rule) -> np.ndarray:
    if isinstance(rule, (int, np.integer)):
        return rule_table(rule)
    table = np.asarray(rule, dtype=np.uint8)
    if table.shape != (8,) or table.max(initial=0) > 1:
        raise ValueError("rule table must be 8 entries of 0/1")
    return table


def _shift_1d(x: np.ndarray, boundary: str) -> tuple[np.ndarray, np.ndarray]:
    """Left and right neighbor views of every cell along the last axis."""
    if boundary == "periodic":
        return np.roll(x, 1, axis=-1), np.roll(x, -1, axis=-1)
    if boundary == "zero":
        left = np.zeros_like(x)
        right = np.zeros_like(x)
        left[..., 1:] = x[..., :-1]
        right[..., :-1] = x[..., 1:]
        return left, right
    raise ValueError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")


def step_1d(state, rule, boundary: str = "periodic") -> np.ndarray:
    """Apply one synchronous update of an elementary rule.

    ``state`` is a 0/1 array whose last axis (width >= 3) is the cell
    row; leading axes are batched. ``rule`` is a rule id or an 8-entry
    table. Returns a new array; the input is not modified.

    The additive rules 90 (left XOR right) and 150 (left XOR center XOR
    right) take a branch-free XOR path; everything else goes through
    table lookup. Both paths produce identical results.
    """
    x = np.asarray(state, dtype=np.uint8)
    if x.shape[-1] < 3:
        raise ValueError(f"row width must be >= 3, got {x.shape[-1]}")
    table = _as_table(rule)
    rule_id = _table_to_id(table)
    left, right = _shift_1d(x, boundary)
    if rule_id == 90:
        out = left ^ right
    elif rule_id == 150:
        out = left ^ x ^ right
    else:
        idx = (left << 2) | (x << 1) | right
        out = table[idx]
    add_ca_ops(x.size)
    return out


def step_life(state, boundary: str = "periodic") -> np.ndarray:
    """Apply one synchronous Life update (birth 3, survive 2 or 3).

    ``state`` is a 0/1 array whose last two axes (each >= 3) form the
    grid; leading axes are batched.
    """
    x = np.asarray(state, dtype=np.uint8)
    h, w = x.shape[-2], x.shape[-1]
    if h < 3 or w < 3:
        raise ValueError(f"grid must be at least 3x3, got {h}x{w}")
    if boundary == "periodic":
        counts = np.zeros(x.shape, dtype=np.uint8)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                counts += np.roll(np.roll(x, di, axis=-2), dj, axis=-1)
    elif boundary == "zero":
        pad = [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)]
        padded = np.pad(x, pad)
        counts = np.zeros(x.shape, dtype=np.uint8)
        for di in (0, 1, 2):
            for dj in (0, 1, 2):
                if di == 1 and dj == 1:
                    continue
                counts += padded[..., di : di + h, dj : dj + w]
    else:
        raise ValueError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")
    out = ((counts == 3) | ((x == 1) & (counts == 2))).astype(np.uint8)
    add_ca_ops(x.size)
    return out


def evolve(state, rule, n_steps: int, boundary: str = "periodic") -> np.ndarray:
    """Run ``n_steps`` updates and return the stacked post-step states.

    The result has shape ``(n_steps,) + state.shape`` and contains the
    state after each update, in order. The initial state is not
    included. ``rule`` is an elementary rule id/table, or ``"life"``
    for the 2D engine.
    """
    n_steps = int(n_steps)
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    x = np.asarray(state, dtype=np.uint8)
    snapshots = np.empty((n_steps,) + x.shape, dtype=np.uint8)
    if isinstance(rule, str):
        if rule != LIFE:
            raise ValueError(f"unknown rule {rule!r}")
        for i in range(n_steps):
            x = step_life(x, boundary)
            snapshots[i] = x
    else:
        table = _as_table(rule)
        for i in range(n_steps):
            x = step_1d(x, table, boundary)
            snapshots[i] = x
    return snapshots


def format_volume(volume) -> str:
    """Render a space-time volume as text, one row of '0'/'1' per step.

    2D snapshots are flattened row-major, so every line has the same
    number of characters regardless of engine.
    """
    v = np.asarray(volume, dtype=np.uint8)
    if v.ndim < 2:
        raise ValueError("expected at least (n_steps, cells...)")
    flat = v.reshape(v.shape[0], -1)
    return "\n".join("".join("1" if b else "0" for b in row) for row in flat)


def parse_volume(text: str, shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Inverse of :func:`format_volume`.

    Returns a ``(n_steps, cells)`` array, reshaped to
    ``(n_steps,) + shape`` when ``shape`` is given (for 2D volumes).
    """
    rows = [line for line in text.strip().splitlines() if line]
    if not rows:
        raise ValueError("empty volume text")
    width = len(rows[0])
    out = np.zeros((len(rows), width), dtype=np.uint8)
    for i, line in enumerate(rows):
        if len(line) != width or set(line) - {"0", "1"}:
            raise ValueError(f"bad volume row {i}: {line!r}")
        out[i] = np.frombuffer(line.encode("ascii"), dtype=np.uint8) - ord("0")
    if shape is not None:
        out = out.reshape((len(rows),) + tuple(shape))
    return out
