"""Input encoders: project binary input vectors onto CA cells.

The workhorse is the random mapping: each of the R reservoir segments
gets its own random assignment of input channels to distinct cells, and
a step's input vector is combined into the segment state at those cells
(XOR by default, so repeated presentations toggle rather than saturate).

A weighted encoder is also provided for non-binary inputs: a fixed
random projection followed by thresholding yields the binary vector
that the mapping then injects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

INJECT_MODES = ("xor", "set")


@dataclass(frozen=True)
class Mapping:
    """Assignment of input channels to distinct cells of one segment.

    ``positions[d]`` is the flat cell index receiving input channel
    ``d``. Positions must be distinct and in range; for 2D segments
    they index the row-major flattening of the grid.
    """

    positions: tuple[int, ...]
    n_cells: int
    seed: int | None = None

    def __post_init__(self):
        if self.n_cells < 1:
            raise ValueError("n_cells must be >= 1")
        if len(self.positions) > self.n_cells:
            raise ValueError(
                f"{len(self.positions)} channels cannot map onto {self.n_cells} cells"
            )
        if len(set(self.positions)) != len(self.positions):
            raise ValueError("positions must be distinct")
        for p in self.positions:
            if not 0 <= p < self.n_cells:
                raise ValueError(f"position {p} out of range for {self.n_cells} cells")

    @property
    def input_dim(self) -> int:
        return len(self.positions)


def make_mappings(
    input_dim: int,
    count: int,
    seed,
    n_cells: int | None = None,
) -> list[Mapping]:
    """Draw ``count`` independent uniform random mappings.

    Each mapping sends the ``input_dim`` channels to distinct cells of
    a segment with ``n_cells`` cells (defaults to ``input_dim``, i.e. a
    random permutation). ``seed`` may be an int or a
    ``numpy.random.SeedSequence``; the same seed always reproduces the
    same list.
    """
    if n_cells is None:
        n_cells = input_dim
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    seed_echo = seed if isinstance(seed, (int, type(None))) else None
    out = []
    for _ in range(count):
        positions = rng.permutation(n_cells)[:input_dim]
        out.append(
            Mapping(
                positions=tuple(int(p) for p in positions),
                n_cells=int(n_cells),
                seed=seed_echo,
            )
        )
    return out


def inject(state, u, mapping: Mapping, mode: str = "xor") -> np.ndarray:
    """Combine a binary input vector into a segment state.

    ``state`` is the segment (any shape; positions index its row-major
    flattening), ``u`` the binary input of length ``mapping.input_dim``.
    Returns a new array. ``mode="xor"`` toggles the mapped cells where
    ``u`` has a 1; ``mode="set"`` forces them to 1.
    """
    if mode not in INJECT_MODES:
        raise ValueError(f"mode must be one of {INJECT_MODES}, got {mode!r}")
    x = np.asarray(state, dtype=np.uint8)
    if x.size != mapping.n_cells:
        raise ValueError(f"state has {x.size} cells, mapping expects {mapping.n_cells}")
    u = np.asarray(u, dtype=np.uint8)
    if u.shape != (mapping.input_dim,):
        raise ValueError(f"u must have shape ({mapping.input_dim},), got {u.shape}")
    if u.max(initial=0) > 1:
        raise ValueError("u must be binary")
    out = x.reshape(-1).copy()
    pos = np.asarray(mapping.positions)
    if mode == "xor":
        out[pos] ^= u
    else:
        out[pos] |= u
    return out.reshape(x.shape)


@dataclass(frozen=True)
class WeightedEncoder:
    """Dense random projection with per-cell thresholds.

    Encodes a real vector ``x`` as ``(weights @ x > thresholds)``,
    giving one bit per cell. Weight rows must be finite and nonzero so
    every output bit actually depends on the input.
    """

    weights: np.ndarray
    thresholds: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError("weights must be 2D (n_cells, input_dim)")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(np.all(w == 0, axis=1)):
            raise ValueError("every weight row needs at least one nonzero entry")
        t = self.thresholds
        t = np.zeros(w.shape[0]) if t is None else np.asarray(t, dtype=np.float64)
        if t.shape != (w.shape[0],) or not np.all(np.isfinite(t)):
            raise ValueError("thresholds must be finite with one entry per cell")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "thresholds", t)

    @property
    def n_cells(self) -> int:
        return self.weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]


def random_weighted_encoder(n_cells: int, input_dim: int, seed) -> WeightedEncoder:
    """Gaussian random projection encoder with zero thresholds."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((n_cells, input_dim))
    return WeightedEncoder(weights=w, thresholds=np.zeros(n_cells))


def encode_weighted(x, enc: WeightedEncoder) -> np.ndarray:
    """Binarize a real input vector through a weighted encoder."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (enc.input_dim,):
        raise ValueError(f"x must have shape ({enc.input_dim},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    return (enc.weights @ x > enc.thresholds).astype(np.uint8)


def mappings_to_json(mappings: list[Mapping]) -> str:
    """Serialize a mapping list to a JSON document."""
    if not mappings:
        raise ValueError("no mappings to serialize")
    doc = {
        "n_cells": mappings[0].n_cells,
        "input_dim": mappings[0].input_dim,
        "seed": mappings[0].seed,
        "positions": [list(m.positions) for m in mappings],
    }
    return json.dumps(doc)


def mappings_from_json(text: str) -> list[Mapping]:
    doc = json.loads(text)
    return [
        Mapping(positions=tuple(p), n_cells=doc["n_cells"], seed=doc.get("seed"))
        for p in doc["positions"]
    ]
