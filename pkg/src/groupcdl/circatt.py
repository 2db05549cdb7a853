"""Sliding-window attention on a circulant (BCCB) sparsity pattern.

A Q x Q adjacency restricted to a circular 2D window of odd width W has the
same W*W nonzero offsets in every row, so it is stored as a dense band array
of shape (Q, W*W): entry [i, o] is the coefficient linking pixel i to its
o-th window neighbor (row-major offsets, wrap-around indexing). Every kernel
below runs in O(Q * W^2 * M) time and never materializes the dense matrix.

Because the pattern is circulant, gathering neighbor o of every pixel at once
is a single np.roll of the (q1, q2) grid; all kernels are written that way.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import LatentCode

__all__ = [
    "BccbPattern",
    "CircSparse",
    "neighbor_index",
    "circ_dist_sim",
    "circ_dist_sim_bwd",
    "circ_row_softmax",
    "circ_row_softmax_bwd",
    "circ_att",
    "circ_att_bwd",
    "circ_att_t",
    "circ_transpose",
]

_DENSE_LIMIT = 4096


@lru_cache(maxsize=64)
def _offsets(q1: int, q2: int, window: int):
    w1, w2 = min(window, q1), min(window, q2)
    dys = np.arange(w1) - (w1 - 1) // 2
    dxs = np.arange(w2) - (w2 - 1) // 2
    off = np.array([(dy, dx) for dy in dys for dx in dxs], dtype=np.int64)
    lut = {(dy % q1, dx % q2): o for o, (dy, dx) in enumerate(off)}
    opp = np.array([lut[(-dy) % q1, (-dx) % q2] for dy, dx in off], dtype=np.int64)
    return off, opp


@dataclass(frozen=True)
class BccbPattern:
    """Circular sliding-window sparsity pattern on a q1 x q2 pixel grid.

    The stored window is clamped to min(window, q) per axis so wrap-around
    never duplicates a neighbor.
    """

    q1: int
    q2: int
    window: int

    def __post_init__(self):
        if self.q1 < 1 or self.q2 < 1:
            raise ValueError("grid dims must be positive")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and positive, got {self.window}")

    @property
    def size(self) -> int:
        return self.q1 * self.q2

    @property
    def nnz_per_row(self) -> int:
        return min(self.window, self.q1) * min(self.window, self.q2)

    @property
    def offsets(self) -> np.ndarray:
        return _offsets(self.q1, self.q2, self.window)[0]

    @property
    def opposite(self) -> np.ndarray:
        """For each offset index, the index of the negated offset (mod grid)."""
        return _offsets(self.q1, self.q2, self.window)[1]


def neighbor_index(pattern: BccbPattern, i, o):
    """Flat pixel index of the o-th window neighbor of pixel i (wraps)."""
    r, c = np.divmod(np.asarray(i), pattern.q2)
    dy, dx = pattern.offsets[o]
    return ((r + dy) % pattern.q1) * pattern.q2 + (c + dx) % pattern.q2


@dataclass(frozen=True)
class CircSparse:
    """Band-stored sparse matrix on a BccbPattern; values shape (Q, nnz_per_row)."""

    pattern: BccbPattern
    values: np.ndarray

    def __post_init__(self):
        want = (self.pattern.size, self.pattern.nnz_per_row)
        if self.values.shape != want:
            raise ValueError(f"values shape {self.values.shape}, expected {want}")

    @classmethod
    def identity(cls, pattern: BccbPattern) -> "CircSparse":
        vals = np.zeros((pattern.size, pattern.nnz_per_row))
        off = pattern.offsets
        center = int(np.where((off[:, 0] == 0) & (off[:, 1] == 0))[0][0])
        vals[:, center] = 1.0
        return cls(pattern, vals)

    def to_dense(self, fill: float = 0.0) -> np.ndarray:
        """Materialize as a dense (Q, Q) matrix; only for small grids."""
        pat = self.pattern
        if pat.size > _DENSE_LIMIT:
            raise ValueError(f"refusing to densify Q={pat.size} > {_DENSE_LIMIT}")
        dense = np.full((pat.size, pat.size), fill, dtype=self.values.dtype)
        rows = np.arange(pat.size)
        for o in range(pat.nnz_per_row):
            dense[rows, neighbor_index(pat, rows, o)] = self.values[:, o]
        return dense

    @classmethod
    def from_dense(cls, dense: np.ndarray, pattern: BccbPattern) -> "CircSparse":
        if pattern.size > _DENSE_LIMIT:
            raise ValueError(f"refusing to read dense Q={pattern.size} > {_DENSE_LIMIT}")
        rows = np.arange(pattern.size)
        vals = np.empty((pattern.size, pattern.nnz_per_row), dtype=dense.dtype)
        for o in range(pattern.nnz_per_row):
            vals[:, o] = dense[rows, neighbor_index(pattern, rows, o)]
        return cls(pattern, vals)


def _grid(values: np.ndarray, pat: BccbPattern) -> np.ndarray:
    return values.reshape(pat.q1, pat.q2, pat.nnz_per_row)


def _as_code(x) -> np.ndarray:
    return x.data if isinstance(x, LatentCode) else np.asarray(x)


# ---------------------------------------------------------------------------
# raw kernels on (Q, nnz) value arrays; public wrappers below


def dist_sim_values(k: np.ndarray, q: np.ndarray, pat: BccbPattern) -> np.ndarray:
    """S[i, o] = -0.5 * sum_c |k[c, i] - q[c, nbr(i, o)]|^2 (always real)."""
    kc = np.conj(k)
    k2 = np.sum((k * kc).real, axis=0)
    q2 = np.sum((q * np.conj(q)).real, axis=0)
    vals = np.empty((pat.q1, pat.q2, pat.nnz_per_row), dtype=np.float64)
    for o, (dy, dx) in enumerate(pat.offsets):
        qr = np.roll(q, (-dy, -dx), axis=(1, 2))
        cross = np.einsum("cij,cij->ij", kc, qr).real
        vals[:, :, o] = -0.5 * (k2 + np.roll(q2, (-dy, -dx), axis=(0, 1)) - 2.0 * cross)
    return vals.reshape(pat.size, pat.nnz_per_row)


def att_values(vals: np.ndarray, x: np.ndarray, pat: BccbPattern) -> np.ndarray:
    """y[c, i] = sum_o vals[i, o] * x[c, nbr(i, o)]."""
    v = _grid(vals, pat)
    out = np.zeros(x.shape, dtype=np.result_type(vals, x))
    for o, (dy, dx) in enumerate(pat.offsets):
        out += v[:, :, o] * np.roll(x, (-dy, -dx), axis=(1, 2))
    return out


def att_t_values(vals: np.ndarray, x: np.ndarray, pat: BccbPattern) -> np.ndarray:
    """Apply the transpose without materializing it: y[c, j] = sum_i vals[i, o(i->j)] x[c, i]."""
    v = _grid(vals, pat)
    out = np.zeros(x.shape, dtype=np.result_type(vals, x))
    for o, (dy, dx) in enumerate(pat.offsets):
        out += np.roll(v[:, :, o] * x, (dy, dx), axis=(1, 2))
    return out


def row_sum_values(vals: np.ndarray, pat: BccbPattern) -> np.ndarray:
    return vals.reshape(pat.size, -1).sum(axis=1).reshape(pat.q1, pat.q2)


def col_sum_values(vals: np.ndarray, pat: BccbPattern) -> np.ndarray:
    v = _grid(vals, pat)
    out = np.zeros((pat.q1, pat.q2), dtype=vals.dtype)
    for o, (dy, dx) in enumerate(pat.offsets):
        out += np.roll(v[:, :, o], (dy, dx), axis=(0, 1))
    return out


def dist_sim_bwd_values(dS: np.ndarray, k: np.ndarray, q: np.ndarray, pat: BccbPattern):
    dk = att_values(dS, q, pat) - row_sum_values(dS, pat) * k
    dq = att_t_values(dS, k, pat) - col_sum_values(dS, pat) * q
    return dk, dq


def att_bwd_values(vals: np.ndarray, x: np.ndarray, dy: np.ndarray, pat: BccbPattern):
    dv = np.empty((pat.q1, pat.q2, pat.nnz_per_row), dtype=np.float64)
    dyc = np.conj(dy)
    for o, (d1, d2) in enumerate(pat.offsets):
        dv[:, :, o] = np.einsum("cij,cij->ij", dyc, np.roll(x, (-d1, -d2), axis=(1, 2))).real
    dx = att_t_values(vals, dy, pat)
    return dv.reshape(pat.size, pat.nnz_per_row), dx


def softmax_values(vals: np.ndarray) -> np.ndarray:
    e = np.exp(vals - vals.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd_values(dA: np.ndarray, A: np.ndarray) -> np.ndarray:
    inner = np.sum(dA * A, axis=1, keepdims=True)
    return A * (dA - inner)


# ---------------------------------------------------------------------------
# typed API


def circ_dist_sim(k, q, window: int) -> CircSparse:
    """Windowed negative half squared distances between per-pixel feature vectors.

    k, q: (M, q1, q2) real or complex feature maps on the same grid.
    """
    ka, qa = _as_code(k), _as_code(q)
    if ka.shape != qa.shape:
        raise ValueError(f"feature shape mismatch {ka.shape} vs {qa.shape}")
    pat = BccbPattern(ka.shape[1], ka.shape[2], window)
    return CircSparse(pat, dist_sim_values(ka, qa, pat))


def circ_dist_sim_bwd(dS: CircSparse, k, q):
    """Backward of circ_dist_sim: dk = dS q - (dS 1) * k, dq = dS^T k - (dS^T 1) * q."""
    ka, qa = _as_code(k), _as_code(q)
    dk, dq = dist_sim_bwd_values(dS.values, ka, qa, dS.pattern)
    return dk, dq


def circ_row_softmax(S: CircSparse) -> CircSparse:
    """Row-stochastic normalization; rows are exactly the stored window entries."""
    return CircSparse(S.pattern, softmax_values(S.values))


def circ_row_softmax_bwd(dA: np.ndarray, A: CircSparse) -> np.ndarray:
    return softmax_bwd_values(dA, A.values)


def circ_att(A: CircSparse, x) -> LatentCode:
    """Apply the band-stored adjacency channel-wise: y = A x per subband."""
    xa = _as_code(x)
    pat = A.pattern
    if xa.shape[1:] != (pat.q1, pat.q2):
        raise ValueError(f"grid mismatch: x {xa.shape[1:]}, pattern ({pat.q1}, {pat.q2})")
    return LatentCode(att_values(A.values, xa, pat))


def circ_att_bwd(A: CircSparse, x, dy):
    """Backward of circ_att: dA[i, o] = Re <dy[i], x[nbr(i, o)]>, dx = A^T dy."""
    xa, dya = _as_code(x), _as_code(dy)
    dv, dx = att_bwd_values(A.values, xa, dya, A.pattern)
    return CircSparse(A.pattern, dv), dx


def circ_att_t(A: CircSparse, x) -> LatentCode:
    """Apply the transposed adjacency channel-wise."""
    return LatentCode(att_t_values(A.values, _as_code(x), A.pattern))


def circ_transpose(S: CircSparse) -> CircSparse:
    """Transpose in band storage; the pattern is closed under transposition."""
    pat = S.pattern
    v = _grid(S.values, pat)
    out = np.empty_like(v)
    opp = pat.opposite
    for o, (dy, dx) in enumerate(pat.offsets):
        out[:, :, o] = np.roll(v[:, :, opp[o]], (-dy, -dx), axis=(0, 1))
    return CircSparse(pat, out.reshape(pat.size, pat.nnz_per_row))
