"""Composable set encodings over additive rules.

An additive elementary rule updates every cell as a XOR of its
neighborhood, so evolution started from the all-zero lattice is linear
over F2: the trajectory seeded by a union of disjoint cell sets equals
the XOR of the trajectories seeded by the parts. This module packages
that fact as a small algebra. A *concept* pairs a support set of
object indices with the space-time feature produced by encoding its
indicator vector once at t = 0 and evolving I iterations. Union,
intersection, symmetric difference and complement of concepts are then
computed directly in feature space:

    C(X xor Y)   = C(X) ^ C(Y)            (the defining homomorphism)
    C(A or B)    = C(A) ^ C(B - A)
    C(A and B)   = C(A) ^ C(A - B)
    C(not A)     = C(U - A)                (U = the declared universe)

Each derived operation costs at most one fresh evolution (for the set
difference); the symmetric-difference path costs none at all, which an
active :func:`carc.metering.meter` will confirm. Feature-level results
are exact, not approximate: combining concepts and encoding the
combined support from scratch produce identical bit patterns.

Encoding layout matches the sequence reservoirs: the indicator is
written identically into each of ``n_copies`` adjacent zones of a ring
(so copies are redundant but feature lengths line up with equally
sized sequence configurations), and the feature concatenates all I
snapshots per zone in (copy, iteration, cell) order.

The elementwise product of two features is exposed as well
(:func:`mult`); it is the field multiplication of the feature vectors
and is generally *not* the encoding of any support set, so it returns
a raw array rather than a concept.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict

import numpy as np

from carc import ca

ADDITIVE_RULES = (90, 150)


@dataclass(frozen=True)
class ConceptConfig:
    """Shared encoding parameters for a family of combinable concepts.

    ``n_objects`` is the universe size: object indices run from 0 to
    ``n_objects - 1`` and double as cell positions within a zone.
    Only additive rules are accepted; for any other rule the XOR
    homomorphism the whole algebra rests on simply does not hold.
    """

    n_objects: int
    iterations: int
    rule: int = 90
    n_copies: int = 1
    boundary: str = "periodic"

    def __post_init__(self):
        if self.rule not in ADDITIVE_RULES:
            raise ValueError(
                f"rule {self.rule} is not additive; concepts need one of "
                f"{ADDITIVE_RULES}"
            )
        if self.n_objects < 3:
            raise ValueError("universe needs at least 3 objects")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.n_copies < 1:
            raise ValueError("n_copies must be >= 1")
        if self.boundary not in ca.BOUNDARIES:
            raise ValueError(f"boundary must be one of {ca.BOUNDARIES}")

    @property
    def feature_dim(self) -> int:
        return self.n_copies * self.iterations * self.n_objects

    @property
    def universe(self) -> frozenset:
        return frozenset(range(self.n_objects))

    def to_dict(self) -> dict:
        return asdict(self)

    def key(self) -> str:
        """Short content hash identifying the configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]


def concept_config_from_dict(doc: dict) -> ConceptConfig:
    return ConceptConfig(**doc)


def _encode(cfg: ConceptConfig, support: frozenset) -> np.ndarray:
    """Fresh single-shot encoding of a support set.

    The quiescent state is a fixed point of additive rules, so the
    empty support short-circuits to the zero feature without spending
    an evolution.
    """
    if not support:
        feat = np.zeros(cfg.feature_dim, dtype=np.uint8)
        feat.flags.writeable = False
        return feat
    u = np.zeros(cfg.n_objects, dtype=np.uint8)
    u[sorted(support)] = 1
    lattice = np.tile(u, cfg.n_copies)
    volume = ca.evolve(lattice, cfg.rule, cfg.iterations, cfg.boundary)
    zones = volume.reshape(cfg.iterations, cfg.n_copies, cfg.n_objects)
    feat = np.ascontiguousarray(np.moveaxis(zones, 0, 1)).reshape(-1)
    feat.flags.writeable = False
    return feat


@dataclass(frozen=True, eq=False)
class Concept:
    """An immutable support set with its cached encoding.

    The support is carried alongside the feature because the derived
    operations need set differences, which are not recoverable from
    features alone. The invariant ``feature == encoding of support``
    holds for every concept this module constructs.
    """

    support: frozenset
    feature: np.ndarray  # (cfg.feature_dim,) uint8, read-only
    cfg: ConceptConfig

    def __post_init__(self):
        object.__setattr__(self, "support", frozenset(int(i) for i in self.support))
        feat = np.asarray(self.feature, dtype=np.uint8)
        if feat.shape != (self.cfg.feature_dim,):
            raise ValueError(
                f"feature must have shape ({self.cfg.feature_dim},), "
                f"got {feat.shape}"
            )
        feat = feat.copy() if feat.flags.writeable else feat
        feat.flags.writeable = False
        object.__setattr__(self, "feature", feat)


def reservoir_of(support, cfg: ConceptConfig) -> Concept:
    """Encode a set of object indices into a concept.

    Deterministic: the same support under the same configuration
    always yields the identical feature.
    """
    idx = frozenset(int(i) for i in support)
    for i in idx:
        if not 0 <= i < cfg.n_objects:
            raise ValueError(
                f"object index {i} outside universe 0..{cfg.n_objects - 1}"
            )
    return Concept(support=idx, feature=_encode(cfg, idx), cfg=cfg)


def _same_cfg(a: Concept, b: Concept) -> ConceptConfig:
    if a.cfg != b.cfg:
        raise ValueError("concepts built under different configurations "
                         "cannot be combined")
    return a.cfg


def or_(a: Concept, b: Concept) -> Concept:
    """Union: C(A) ^ C(B - A). One fresh evolution at most.

    Adding a concept that is already stored changes nothing, so a
    feature can absorb repeated unions idempotently.
    """
    cfg = _same_cfg(a, b)
    extra = frozenset(b.support - a.support)
    return Concept(support=a.support | b.support,
                   feature=a.feature ^ _encode(cfg, extra), cfg=cfg)


def and_(a: Concept, b: Concept) -> Concept:
    """Intersection: C(A) ^ C(A - B). One fresh evolution at most."""
    cfg = _same_cfg(a, b)
    gone = frozenset(a.support - b.support)
    return Concept(support=a.support & b.support,
                   feature=a.feature ^ _encode(cfg, gone), cfg=cfg)


def xor_c(a: Concept, b: Concept) -> Concept:
    """Symmetric difference: C(A) ^ C(B). No evolution spent."""
    cfg = _same_cfg(a, b)
    return Concept(support=a.support ^ b.support,
                   feature=a.feature ^ b.feature, cfg=cfg)


def not_(a: Concept) -> Concept:
    """Complement against the configured universe, freshly encoded."""
    comp = frozenset(a.cfg.universe - a.support)
    return Concept(support=comp, feature=_encode(a.cfg, comp), cfg=a.cfg)


def mult(a: Concept, b: Concept) -> np.ndarray:
    """Elementwise product of the two features (AND in F2).

    This is a field operation on feature vectors, not a set operation:
    the result is in general not the encoding of any support, so a raw
    read-only array is returned instead of a concept.
    """
    _same_cfg(a, b)
    out = a.feature & b.feature
    out.flags.writeable = False
    return out


_CONCEPT_MAGIC = "carc-concept-v1"


def save_concept(path, concept: Concept) -> None:
    """One JSON header line (support, config, config hash), then the
    bit-packed feature."""
    header = {
        "magic": _CONCEPT_MAGIC,
        "support": sorted(concept.support),
        "cfg": concept.cfg.to_dict(),
        "cfg_key": concept.cfg.key(),
        "n_features": concept.cfg.feature_dim,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(np.packbits(concept.feature).tobytes())


def load_concept(path) -> Concept:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("magic") != _CONCEPT_MAGIC:
            raise ValueError(f"{path}: not a concept file")
        cfg = concept_config_from_dict(header["cfg"])
        if header.get("cfg_key") != cfg.key():
            raise ValueError(f"{path}: config hash mismatch")
        n = int(header["n_features"])
        if n != cfg.feature_dim:
            raise ValueError(f"{path}: feature length disagrees with config")
        payload = fh.read(-(-n // 8))
    feature = np.unpackbits(
        np.frombuffer(payload, dtype=np.uint8), count=n
    )
    return Concept(support=frozenset(header["support"]), feature=feature, cfg=cfg)
