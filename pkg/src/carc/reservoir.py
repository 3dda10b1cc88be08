"""Fixed CA reservoirs: R random mappings onto a lattice, space-time features.

A reservoir consists of R random mappings, each assigning the input
channels to distinct cells of its own zone of the lattice. A sequence
step injects the input through every mapping, evolves the automaton I
iterations, and emits the step's space-time volume as a flat binary
feature vector of length ``F = R * I * cells_per_zone``, ordered by
(mapping, iteration, cell). Lattice state persists across steps; that
carryover is the only memory mechanism.

Coupling modes. By default (``"fused"``) the R zones are concatenated
into a single lattice evolved as a whole, so activity spreads across
zone borders and the state space grows with R; this long-range mixing
is what lets small rules hold a pattern through hundreds of distractor
steps. The ``"isolated"`` mode evolves each zone as its own closed
lattice instead. Isolated zones of width equal to the input dimension
are provably too small for the recall benchmarks under any linear
injection scheme (every zone sees the same step operator, whose
minimal polynomial is shorter than the pattern), so ``"fused"`` is the
default; ``"isolated"`` remains available for single-shot encodings
and ablations.

Injection. Each channel ORs (``"set"``, the default) or XORs
(``"xor"``) its bit into the same cell at every step. OR makes what
the lattice retains depend on the rule's own dynamics: a rule that
cannot propagate the written bits loses them, so recall performance
tracks rule class. XOR keeps the whole pipeline linear over F2 for
additive rules (90, 150), which is what the composable-encoding
algebra relies on, but on a periodic lattice those rules are nilpotent
and forget every write after a fixed horizon, so XOR is the wrong
choice for long-distractor tasks.

State carry. Each step the automaton is evolved I iterations to build
the feature volume, but only the first of those snapshots becomes the
next persistent state (``carry="single"``). Deeper feature volumes
therefore probe further into each step's dynamics without aging the
stored pattern any faster; how long a pattern survives depends on the
step count alone, not on I. Carrying the final snapshot instead
(``carry="final"``) makes every feature iteration also a state
iteration, which buries the pattern under I times more churn per step
and measurably hurts recall at large I.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, replace

import numpy as np

from carc import ca
from carc.encoding import Mapping, make_mappings, INJECT_MODES

COUPLINGS = ("fused", "isolated")
CARRIES = ("single", "final")

DEFAULT_MODE = "set"
DEFAULT_COUPLING = "fused"
DEFAULT_CARRY = "single"


def zone_grid(input_dim: int) -> tuple[int, int]:
    """Smallest near-square (H, W) with H*W >= input_dim + 2.

    Life zones get two spare cells beyond the mapped channels. Zones
    sized exactly to the input collapse distinct write patterns far
    too often (the write sites crowd each other), while much larger
    zones spread the writes so thin that isolated live cells die
    before they can interact.
    """
    h = 1
    while True:
        for w in (h, h + 1):
            if h * w >= input_dim + 2:
                return (h, w)
        h += 1


def _tile_grid(n_mappings: int) -> tuple[int, int]:
    """Arrangement of Life zones on the fused board: two rows of tiles
    when R is even (long flat boards churn less than square ones),
    one row otherwise."""
    if n_mappings % 2 == 0:
        return (2, n_mappings // 2)
    return (1, n_mappings)


@dataclass(frozen=True)
class ReservoirConfig:
    """Immutable description of a reservoir.

    ``rule`` is an elementary rule id (0..255) or ``"life"``.
    ``n_mappings`` (R) zones each receive the input through their own
    random mapping and contribute ``iterations`` (I) snapshots per
    step. 1D zones are exactly ``input_dim`` cells wide; Life zones
    use :func:`zone_grid`, tiled into a board when fused.

    ``boundary`` defaults by rule family: periodic for elementary
    rules (a closed ring keeps every zone statistically identical),
    a dead frame for Life (a wrapped board recirculates debris and
    erases stored patterns noticeably faster).
    """

    rule: int | str
    n_mappings: int
    iterations: int
    input_dim: int
    mode: str = DEFAULT_MODE
    boundary: str | None = None
    coupling: str = DEFAULT_COUPLING
    carry: str = DEFAULT_CARRY
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.rule, str):
            if self.rule != ca.LIFE:
                raise ValueError(f"unknown rule {self.rule!r}")
        elif not 0 <= int(self.rule) <= 255:
            raise ValueError(f"rule id must be in 0..255, got {self.rule}")
        if self.n_mappings < 1:
            raise ValueError("n_mappings must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.mode not in INJECT_MODES:
            raise ValueError(f"mode must be one of {INJECT_MODES}")
        if self.boundary is None:
            default = "zero" if self.rule == ca.LIFE else "periodic"
            object.__setattr__(self, "boundary", default)
        if self.boundary not in ca.BOUNDARIES:
            raise ValueError(f"boundary must be one of {ca.BOUNDARIES}")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"coupling must be one of {COUPLINGS}")
        if self.carry not in CARRIES:
            raise ValueError(f"carry must be one of {CARRIES}")
        if not isinstance(self.rule, str) and self.input_dim < 3:
            # elementary zones need at least 3 cells for a real neighborhood
            raise ValueError("1D zones need input_dim >= 3")
        if isinstance(self.rule, str):
            if self.input_dim < 1:
                raise ValueError("input_dim must be >= 1")
            if min(self.lattice_shape[-2:]) < 3:
                raise ValueError(
                    "Life board is thinner than 3 cells; use more mappings "
                    "(an even count tiles two rows) or a wider input"
                )

    @property
    def zone_shape(self) -> tuple[int, ...]:
        if self.rule == ca.LIFE:
            return zone_grid(self.input_dim)
        return (self.input_dim,)

    # kept as the public name for "cells contributed per mapping"
    @property
    def cells_per_segment(self) -> int:
        return int(np.prod(self.zone_shape))

    @property
    def lattice_shape(self) -> tuple[int, ...]:
        """Shape of the evolving state (all zones)."""
        if self.coupling == "isolated":
            return (self.n_mappings,) + self.zone_shape
        if self.rule == ca.LIFE:
            h, w = self.zone_shape
            gh, gw = _tile_grid(self.n_mappings)
            return (gh * h, gw * w)
        return (self.n_mappings * self.input_dim,)

    @property
    def feature_dim(self) -> int:
        return self.n_mappings * self.iterations * self.cells_per_segment

    def to_dict(self) -> dict:
        return asdict(self)


def config_from_dict(doc: dict) -> ReservoirConfig:
    return ReservoirConfig(**doc)


def _zone_to_flat(cfg: ReservoirConfig) -> np.ndarray:
    """(R, cells_per_zone) table: zone-local cell -> flat lattice index."""
    r, cells = cfg.n_mappings, cfg.cells_per_segment
    local = np.arange(cells)
    if cfg.coupling == "isolated":
        return cells * np.arange(r)[:, None] + local[None, :]
    if cfg.rule == ca.LIFE:
        h, w = cfg.zone_shape
        gh, gw = _tile_grid(r)
        board_w = gw * w
        ty, tx = np.divmod(np.arange(r), gw)  # tile position per zone
        row, col = np.divmod(local, w)  # position within the zone grid
        return ((ty[:, None] * h + row[None, :]) * board_w
                + tx[:, None] * w + col[None, :])
    return cfg.input_dim * np.arange(r)[:, None] + local[None, :]


@dataclass(frozen=True, eq=False)
class ReservoirState:
    """Lattice state plus a step counter."""

    lattice: np.ndarray  # cfg.lattice_shape, uint8
    mappings: tuple[Mapping, ...]
    positions: np.ndarray  # (R, input_dim) zone-local cell indices
    zone_to_flat: np.ndarray  # (R, cells_per_zone) flat lattice indices
    flat_base: np.ndarray  # (R, input_dim) flat lattice write targets
    t: int = 0

    @property
    def segments(self) -> np.ndarray:
        """(R, cells_per_zone) read view of the zones."""
        flat = self.lattice.reshape(-1)
        return flat[self.zone_to_flat]


def init_state(cfg: ReservoirConfig) -> ReservoirState:
    """Draw the mappings from cfg.seed and return the all-zero state."""
    mappings = make_mappings(
        cfg.input_dim, cfg.n_mappings, cfg.seed, n_cells=cfg.cells_per_segment
    )
    positions = np.array([m.positions for m in mappings], dtype=np.int64)
    zone_to_flat = _zone_to_flat(cfg)
    return ReservoirState(
        lattice=np.zeros(cfg.lattice_shape, dtype=np.uint8),
        mappings=tuple(mappings),
        positions=positions,
        zone_to_flat=zone_to_flat,
        flat_base=np.take_along_axis(zone_to_flat, positions, axis=1),
        t=0,
    )


def _inject_all(flat_lattice: np.ndarray, u: np.ndarray, state: ReservoirState,
                cfg: ReservoirConfig) -> None:
    """In-place injection through every mapping.

    ``flat_lattice`` is (..., total_cells); ``u`` is (..., input_dim)
    with matching leading axes. Write targets are distinct cells, so
    the fancy-indexed in-place ops below never collide.
    """
    uu = u[..., None, :]  # broadcast over R
    if cfg.mode == "set":
        flat_lattice[..., state.flat_base] |= uu
    else:
        flat_lattice[..., state.flat_base] ^= uu


def _volume_features(volume: np.ndarray, n_lead: int, cfg: ReservoirConfig
                     ) -> np.ndarray:
    """(I, B..., lattice) volume -> (B..., R, I, cells) flat features."""
    i_iter, r = cfg.iterations, cfg.n_mappings
    cells = cfg.cells_per_segment
    lead = volume.shape[1 : 1 + n_lead]
    flat = volume.reshape((i_iter,) + lead + (-1,))
    # gather zones: (I, B..., R, cells)
    zones = flat[..., np.asarray(_zone_to_flat(cfg))]
    out = np.moveaxis(zones, 0, -3)  # (B..., R, I, cells)
    return np.ascontiguousarray(out).reshape(lead + (r * i_iter * cells,))


def _check_inputs(inputs: np.ndarray, cfg: ReservoirConfig) -> np.ndarray:
    arr = np.asarray(inputs, dtype=np.uint8)
    if arr.shape[-1] != cfg.input_dim:
        raise ValueError(
            f"input has {arr.shape[-1]} channels, config expects {cfg.input_dim}"
        )
    if arr.max(initial=0) > 1:
        raise ValueError("inputs must be binary")
    return arr


def _carry(volume: np.ndarray, cfg: ReservoirConfig) -> np.ndarray:
    snap = volume[0] if cfg.carry == "single" else volume[-1]
    return np.ascontiguousarray(snap)


def process_step(state: ReservoirState, u, cfg: ReservoirConfig
                 ) -> tuple[ReservoirState, np.ndarray]:
    """Inject one input, evolve I iterations, emit the step feature.

    Returns the successor state and a flat uint8 feature vector of
    length ``cfg.feature_dim`` in (mapping, iteration, cell) order.
    """
    u = _check_inputs(u, cfg)
    if u.ndim != 1:
        raise ValueError("process_step takes a single input vector")
    lattice = state.lattice.copy()
    _inject_all(lattice.reshape(-1), u, state, cfg)
    volume = _evolve_lattice(lattice, cfg)  # (I,) + lattice_shape
    feature = _volume_features(volume, 0, cfg)
    nxt = ReservoirState(
        lattice=_carry(volume, cfg), mappings=state.mappings,
        positions=state.positions, zone_to_flat=state.zone_to_flat,
        flat_base=state.flat_base, t=state.t + 1,
    )
    return nxt, feature


def _evolve_lattice(lattice: np.ndarray, cfg: ReservoirConfig) -> np.ndarray:
    # isolated zones ride along as extra batch axes; fused lattices are
    # the trailing spatial axes themselves
    return ca.evolve(lattice, cfg.rule, cfg.iterations, cfg.boundary)


def process_sequence(cfg: ReservoirConfig, inputs) -> np.ndarray:
    """Run a T-step input sequence from the zero state.

    Returns the (T, feature_dim) uint8 feature matrix. Equivalent to
    repeated :func:`process_step`; state carries over between steps.
    """
    inputs = _check_inputs(inputs, cfg)
    if inputs.ndim != 2:
        raise ValueError("process_sequence takes (T, input_dim) inputs")
    return process_batch(cfg, inputs[None])[0]


def process_batch(cfg: ReservoirConfig, inputs) -> np.ndarray:
    """Run many sequences in lockstep through one reservoir draw.

    ``inputs`` is (B, T, input_dim); the result is (B, T, feature_dim).
    All sequences share the same mappings (those of ``cfg.seed``), as
    when building a training set for one trained readout.
    """
    inputs = _check_inputs(inputs, cfg)
    if inputs.ndim != 3:
        raise ValueError("process_batch takes (B, T, input_dim) inputs")
    b, t_len = inputs.shape[0], inputs.shape[1]
    if t_len < 1:
        raise ValueError("need at least one step")
    state = init_state(cfg)
    lattice = np.zeros((b,) + cfg.lattice_shape, dtype=np.uint8)
    feats = np.empty((b, t_len, cfg.feature_dim), dtype=np.uint8)
    for t in range(t_len):
        _inject_all(lattice.reshape(b, -1), inputs[:, t], state, cfg)
        volume = _evolve_lattice(lattice, cfg)  # (I, B) + lattice_shape
        feats[:, t] = _volume_features(volume, 1, cfg)
        lattice = _carry(volume, cfg)
    return feats


_FEATURES_MAGIC = "carc-features-v1"


def save_features(path, features: np.ndarray, cfg: ReservoirConfig | None = None) -> None:
    """Write a (T, F) or (B, T, F) binary feature array to disk.

    Format: one JSON header line (shape, optional config echo)
    followed by the bit-packed feature payload.
    """
    arr = np.asarray(features, dtype=np.uint8)
    if arr.ndim not in (2, 3):
        raise ValueError("features must be (T, F) or (B, T, F)")
    header = {
        "magic": _FEATURES_MAGIC,
        "shape": list(arr.shape),
        "config": cfg.to_dict() if cfg is not None else None,
    }
    packed = np.packbits(arr.reshape(-1, arr.shape[-1]), axis=1)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(packed.tobytes())


def load_features(path) -> tuple[np.ndarray, ReservoirConfig | None]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("magic") != _FEATURES_MAGIC:
            raise ValueError(f"{path}: not a feature file")
        shape = tuple(header["shape"])
        packed_width = -(-shape[-1] // 8)
        n_rows = int(np.prod(shape[:-1]))
        payload = fh.read(n_rows * packed_width)
    packed = np.frombuffer(payload, dtype=np.uint8).reshape(n_rows, packed_width)
    feats = np.unpackbits(packed, axis=1)[:, : shape[-1]].reshape(shape)
    cfg = config_from_dict(header["config"]) if header.get("config") else None
    return feats, cfg


def with_seed(cfg: ReservoirConfig, seed: int) -> ReservoirConfig:
    """Same architecture, fresh mapping draw."""
    return replace(cfg, seed=int(seed))
