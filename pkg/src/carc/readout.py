"""Linear readout over binary features, trained by ridge regression.

The readout is the only trained component. Fitting minimizes

    || [X | 1] @ W.T - Y ||^2 + ridge * ||W||^2

for a weight matrix ``W`` of shape (n_outputs, n_features + 1) whose
last column is the bias. Prediction thresholds the affine scores at
0.5.

Fitting is exact but engineered for large binary designs on modest
hardware:

* identical feature columns are collapsed before solving. For
  ``ridge > 0`` the optimizer is unique and symmetric, so duplicate
  columns share one coefficient; solving with multiplicity-scaled
  columns (each unique column scaled by sqrt(count), ridge uniform)
  and splitting the result back reproduces the full solution exactly.
  For ``ridge == 0`` the same scaling makes the minimum-norm solution
  of the reduced problem expand to the minimum-norm solution of the
  full one.
* the normal equations are accumulated in float64 blocks, never
  materializing a float copy of the whole design;
* when there are more (deduplicated) columns than rows, the dual form
  ``W = X~.T @ (X~ X~.T + ridge I)^-1 Y`` is used instead, which needs
  only the row Gram matrix. For very large row counts the row Gram is
  accumulated in float32; entries are inner products of 0/1 vectors,
  i.e. exact small integers, so no precision is lost in accumulation.
  On that path the ridge is clamped up to the float32 Cholesky noise
  floor (eps * trace), without which a rank-deficient Gram cannot be
  factored at all;
* designs too large to hold as dense bytes can be passed bit-packed
  (:class:`PackedFeatures`); fitting and batch prediction then unpack
  row blocks on the fly and never materialize the full matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from carc.metering import add_readout_ops

DEFAULT_RIDGE = 1e-8
DEFAULT_THRESHOLD = 0.5

# Largest deduplicated column count solved in primal form; the Gram
# matrix is (F'+? x F') float64, so 16384 keeps it near 2 GB.
_PRIMAL_MAX_COLS = 16384
# Row counts above this accumulate the dual Gram in float32 (exact for
# binary rows up to 2^24 columns) to halve memory.
_DUAL_F32_MIN_ROWS = 14000
_GRAM_BLOCK_BYTES = 64 << 20
_PACKED_BLOCK_BYTES = 256 << 20


def _f32_ridge_floor(kern: np.ndarray, ridge: float) -> float:
    """Smallest ridge that survives a float32 Cholesky of ``kern``.

    Gram entries are exact integers, so any ridge below the rounding
    noise of the factorization (about eps times the matrix scale)
    vanishes and a rank-deficient Gram stays singular. Clamping to
    eps * trace keeps the factorization positive definite while
    perturbing training scores by roughly ridge / sigma_bulk, far
    below the 0.5 decision margin on the designs this path serves.
    """
    floor = float(np.finfo(np.float32).eps) * float(np.trace(kern))
    return max(ridge, floor)


@dataclass(frozen=True, eq=False)
class PackedFeatures:
    """Bit-packed binary design matrix: rows are packbits of 0/1 rows.

    Eight feature bits per byte make the 43k-feature benchmark designs
    small enough to keep resident while the row Gram (the real memory
    hog) is assembled. Fitting from packed input always uses the dual
    solver, which is exact for any ridge.
    """

    bits: np.ndarray  # (n_rows, ceil(n_features / 8)) uint8
    n_features: int

    def __post_init__(self):
        arr = np.asarray(self.bits, dtype=np.uint8)
        if arr.ndim != 2 or arr.shape[1] != -(-self.n_features // 8):
            raise ValueError("bits must be (n_rows, ceil(n_features/8))")
        object.__setattr__(self, "bits", arr)

    @property
    def n_rows(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_features)

    def row_block(self, lo: int, hi: int, dtype=np.float32) -> np.ndarray:
        """Rows lo..hi as a dense (hi - lo, n_features) array."""
        dense = np.unpackbits(self.bits[lo:hi], axis=1, count=self.n_features)
        return dense.astype(dtype)

    def set_bits(self) -> int:
        """Total number of set feature bits."""
        return int(np.bitwise_count(self.bits).sum(dtype=np.int64))


def pack_features(features) -> PackedFeatures:
    """Pack a 0/1 (n_rows, n_features) matrix for memory-lean fitting."""
    x = np.asarray(features)
    if x.ndim != 2:
        raise ValueError("features must be a (n_rows, n_features) matrix")
    if x.dtype != np.uint8:
        x = x.astype(np.uint8)
    if x.max(initial=0) > 1:
        raise ValueError("features must be 0/1 valued")
    return PackedFeatures(bits=np.packbits(x, axis=1), n_features=x.shape[1])


@dataclass(frozen=True, eq=False)
class ReadoutModel:
    """Trained affine readout with a fixed decision threshold."""

    weights: np.ndarray  # (n_outputs, n_features) float64
    bias: np.ndarray  # (n_outputs,) float64
    ridge: float
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError("weights must be (n_outputs, n_features), bias (n_outputs,)")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_outputs(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def packed(self) -> np.ndarray:
        """The (n_outputs, n_features + 1) matrix with bias as last column."""
        return np.hstack([self.weights, self.bias[:, None]])


def _check_xy(features, targets) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(features)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("features must be a (n_rows, n_features) matrix")
    if x.dtype != np.uint8:
        xu = x.astype(np.uint8)
        if not np.array_equal(xu, x):
            raise ValueError("features must be 0/1 valued")
        x = xu
    if x.max(initial=0) > 1:
        raise ValueError("features must be 0/1 valued")
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] != x.shape[0]:
        raise ValueError("targets must align with features rows")
    return x, y


def _dedup_columns(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Group identical columns of [x | 1].

    Returns (rep_cols, inverse, counts): indices of one representative
    per group (index n_features means the bias column), the group id of
    every original column (bias last), and group sizes.
    """
    n, f = x.shape
    cols = np.empty((f + 1, n), dtype=np.uint8)
    np.copyto(cols[:f], x.T)
    cols[f] = 1
    packed = np.packbits(cols, axis=1)
    del cols
    _, rep, inverse, counts = np.unique(
        packed, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    return rep, inverse.ravel(), counts


def _block_rows(n_rows: int, n_cols: int) -> int:
    return max(1, min(n_rows, _GRAM_BLOCK_BYTES // (8 * max(n_cols, 1))))


def _primal_solve(x, y, rep, counts, ridge):
    """Ridge solve over deduplicated, multiplicity-scaled columns."""
    n, f = x.shape
    fp = len(rep)
    scale = np.sqrt(counts.astype(np.float64))
    gram = np.zeros((fp, fp), dtype=np.float64, order="F")
    rhs = np.zeros((fp, y.shape[1]), dtype=np.float64)
    data_cols = rep[rep < f]
    data_slots = np.flatnonzero(rep < f)
    bias_slots = np.flatnonzero(rep == f)
    nb = _block_rows(n, fp)
    for lo in range(0, n, nb):
        hi = min(lo + nb, n)
        block = np.empty((hi - lo, fp), dtype=np.float64)
        block[:, data_slots] = x[lo:hi, data_cols]
        block[:, bias_slots] = 1.0
        gram += block.T @ block
        rhs += block.T @ y[lo:hi]
        del block
    gram *= scale[:, None]
    gram *= scale[None, :]
    rhs *= scale[:, None]
    if ridge > 0:
        gram[np.diag_indices_from(gram)] += ridge
        delta = scipy.linalg.solve(
            gram, rhs, assume_a="pos", overwrite_a=True, check_finite=False
        )
    else:
        delta, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
    return delta / scale[:, None]  # (fp, n_outputs), per-original-column values


def _dual_solve(x, y, ridge):
    """Kernel-form ridge: coefficients live in row space.

    Exact for any ridge >= 0 (minimum-norm solution at ridge == 0);
    never needs the deduplicated columns, because the row Gram of
    duplicated columns equals that of multiplicity-scaled unique ones.
    Row Gram entries are inner products of 0/1 rows (integers bounded
    by the column count), so float32 accumulation is still exact.
    """
    n, f = x.shape
    dtype = np.float32 if n >= _DUAL_F32_MIN_ROWS else np.float64
    kern = np.zeros((n, n), dtype=dtype, order="F")
    # Large blocks amortize the uint8 -> float casts, which are redone
    # per block pair to avoid holding a full float copy of x.
    nb = max(1, min(n, (256 << 20) // (np.dtype(dtype).itemsize * max(f, 1))))
    edges = list(range(0, n, nb)) + [n]
    for bi in range(len(edges) - 1):
        lo_i, hi_i = edges[bi], edges[bi + 1]
        a_i = np.ascontiguousarray(x[lo_i:hi_i], dtype=dtype)
        for bj in range(bi + 1):
            lo_j, hi_j = edges[bj], edges[bj + 1]
            a_j = a_i if bj == bi else np.ascontiguousarray(x[lo_j:hi_j], dtype=dtype)
            prod = a_i @ a_j.T
            kern[lo_i:hi_i, lo_j:hi_j] = prod
            if bj != bi:
                kern[lo_j:hi_j, lo_i:hi_i] = prod.T
            del a_j, prod
        del a_i
    kern += 1.0  # the bias column contributes an all-ones rank-1 term
    lam = _f32_ridge_floor(kern, ridge) if dtype == np.float32 else ridge
    if lam > 0:
        kern[np.diag_indices_from(kern)] += dtype(lam)
        alpha = scipy.linalg.solve(
            kern, y.astype(dtype), assume_a="pos", overwrite_a=True, check_finite=False
        )
    else:
        alpha, *_ = np.linalg.lstsq(kern, y.astype(dtype), rcond=None)
    del kern
    alpha = alpha.astype(np.float64)
    w_full = np.empty((f + 1, y.shape[1]), dtype=np.float64)
    nb = _block_rows(f, n)
    for lo in range(0, f, nb):
        hi = min(lo + nb, f)
        w_full[lo:hi] = x[:, lo:hi].astype(np.float64).T @ alpha
    w_full[f] = alpha.sum(axis=0)
    return w_full


def _dual_solve_packed(px: PackedFeatures, y, ridge):
    """Dual ridge from bit-packed rows; unpacks blocks on the fly."""
    n, f = px.shape
    dtype = np.float32 if n >= _DUAL_F32_MIN_ROWS else np.float64
    kern = np.zeros((n, n), dtype=dtype, order="F")
    nb = max(1, min(n, _PACKED_BLOCK_BYTES // (np.dtype(dtype).itemsize * max(f, 1))))
    edges = list(range(0, n, nb)) + [n]
    for bi in range(len(edges) - 1):
        lo_i, hi_i = edges[bi], edges[bi + 1]
        a_i = px.row_block(lo_i, hi_i, dtype)
        for bj in range(bi + 1):
            lo_j, hi_j = edges[bj], edges[bj + 1]
            a_j = a_i if bj == bi else px.row_block(lo_j, hi_j, dtype)
            prod = a_i @ a_j.T
            kern[lo_i:hi_i, lo_j:hi_j] = prod
            if bj != bi:
                kern[lo_j:hi_j, lo_i:hi_i] = prod.T
            del a_j, prod
        del a_i
    kern += 1.0  # bias column's rank-1 term
    lam = _f32_ridge_floor(kern, ridge) if dtype == np.float32 else ridge
    if lam > 0:
        kern[np.diag_indices_from(kern)] += dtype(lam)
        alpha = scipy.linalg.solve(
            kern, y.astype(dtype), assume_a="pos", overwrite_a=True, check_finite=False
        )
    else:
        alpha, *_ = np.linalg.lstsq(kern, y.astype(dtype), rcond=None)
    del kern
    alpha = alpha.astype(np.float64)
    w_full = np.zeros((f + 1, y.shape[1]), dtype=np.float64)
    for bi in range(len(edges) - 1):
        lo, hi = edges[bi], edges[bi + 1]
        w_full[:f] += px.row_block(lo, hi, np.float64).T @ alpha[lo:hi]
    w_full[f] = alpha.sum(axis=0)
    return w_full


def fit(features, targets, ridge: float = DEFAULT_RIDGE,
        threshold: float = DEFAULT_THRESHOLD) -> ReadoutModel:
    """Train a readout on binary features and 0/1 targets.

    ``features`` is (n_rows, n_features) 0/1, or a
    :class:`PackedFeatures`; ``targets`` is (n_rows,) or
    (n_rows, n_outputs). Returns the exact ridge solution (the
    minimum-norm least-squares solution when ``ridge == 0``).
    """
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    if isinstance(features, PackedFeatures):
        y = np.asarray(targets, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2 or y.shape[0] != features.n_rows:
            raise ValueError("targets must align with features rows")
        w_full = _dual_solve_packed(features, y, ridge)
        f = features.n_features
        return ReadoutModel(weights=np.ascontiguousarray(w_full[:f].T),
                            bias=w_full[f].copy(), ridge=float(ridge),
                            threshold=float(threshold))
    x, y = _check_xy(features, targets)
    n, f = x.shape
    rep, inverse, counts = _dedup_columns(x)
    fp = len(rep)
    if fp <= min(n, _PRIMAL_MAX_COLS):
        per_group = _primal_solve(x, y, rep, counts, ridge)
        w_full = per_group[inverse]  # (f + 1, n_outputs)
    else:
        w_full = _dual_solve(x, y, ridge)
    weights = np.ascontiguousarray(w_full[:f].T)
    bias = w_full[f].copy()
    return ReadoutModel(weights=weights, bias=bias, ridge=float(ridge),
                        threshold=float(threshold))


def _check_feature(model: ReadoutModel, feature) -> np.ndarray:
    arr = np.asarray(feature, dtype=np.uint8)
    if arr.shape[-1] != model.n_features:
        raise ValueError(
            f"feature has {arr.shape[-1]} bits, model expects {model.n_features}"
        )
    return arr


def scores(model: ReadoutModel, feature) -> np.ndarray:
    """Affine scores for one feature vector, by sparse summation.

    Sums the weight columns at the set bits plus bias; counts one
    readout add per (set bit, output).
    """
    arr = _check_feature(model, feature)
    if arr.ndim != 1:
        raise ValueError("scores takes a single feature vector")
    idx = np.flatnonzero(arr)
    add_readout_ops(idx.size * model.n_outputs)
    return model.weights[:, idx].sum(axis=1) + model.bias


def predict(model: ReadoutModel, feature) -> np.ndarray:
    """Thresholded binary prediction for one feature vector."""
    return (scores(model, feature) > model.threshold).astype(np.uint8)


def predict_batch(model: ReadoutModel, features) -> np.ndarray:
    """Thresholded predictions for (n_rows, n_features) features.

    Accepts a dense 0/1 matrix or :class:`PackedFeatures`. Dense
    matrix product; numerically identical to per-row :func:`predict`
    up to float64 summation order.
    """
    if isinstance(features, PackedFeatures):
        if features.n_features != model.n_features:
            raise ValueError(
                f"features have {features.n_features} bits,"
                f" model expects {model.n_features}"
            )
        n = features.n_rows
        out = np.empty((n, model.n_outputs), dtype=np.uint8)
        nb = _block_rows(n, model.n_features)
        add_readout_ops(features.set_bits() * model.n_outputs)
        for lo in range(0, n, nb):
            hi = min(lo + nb, n)
            s = features.row_block(lo, hi, np.float64) @ model.weights.T + model.bias
            out[lo:hi] = (s > model.threshold).astype(np.uint8)
        return out
    arr = _check_feature(model, features)
    if arr.ndim != 2:
        raise ValueError("predict_batch takes a feature matrix")
    out = np.empty((arr.shape[0], model.n_outputs), dtype=np.uint8)
    nb = _block_rows(arr.shape[0], model.n_features)
    add_readout_ops(int(arr.sum(dtype=np.int64)) * model.n_outputs)
    for lo in range(0, arr.shape[0], nb):
        hi = min(lo + nb, arr.shape[0])
        s = arr[lo:hi].astype(np.float64) @ model.weights.T + model.bias
        out[lo:hi] = (s > model.threshold).astype(np.uint8)
    return out


_MODEL_MAGIC = "carc-readout-v1"


def save_model(path, model: ReadoutModel) -> None:
    """One JSON header line, then the packed weight matrix as float64."""
    header = {
        "magic": _MODEL_MAGIC,
        "n_outputs": model.n_outputs,
        "n_features": model.n_features,
        "ridge": model.ridge,
        "threshold": model.threshold,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(model.packed()).tobytes())


def load_model(path) -> ReadoutModel:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("magic") != _MODEL_MAGIC:
            raise ValueError(f"{path}: not a readout file")
        d_out = int(header["n_outputs"])
        f = int(header["n_features"])
        payload = fh.read(d_out * (f + 1) * 8)
    packed = np.frombuffer(payload, dtype=np.float64).reshape(d_out, f + 1)
    return ReadoutModel(
        weights=packed[:, :f].copy(), bias=packed[:, f].copy(),
        ridge=float(header["ridge"]), threshold=float(header["threshold"]),
    )
