"""Dense matrix utilities and symmetric block assembly for LMI work.

Everything here operates on plain float64 numpy arrays. The block helpers
also accept cvxpy expressions so that the exact same assembly code can
build both numeric matrices and affine constraint left-hand sides.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NonSquare, NotPsd, NotSymmetric

__all__ = [
    "eig_sym",
    "is_psd",
    "is_nsd",
    "factor_gram",
    "schur_complement_nsd",
    "SymBlock",
    "sym",
    "mm",
    "stack_blocks",
]


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {a.shape}")
    if a.size and not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def spectral_norm(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def near_singular(m: np.ndarray, limit: float = 1e8) -> bool:
    """True when inversion of m is unreliable: the smallest singular value
    is below max(1, sigma_max) / limit. Empty matrices are invertible."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return False
    s = np.linalg.svd(m, compute_uv=False)
    return bool(s[-1] <= max(1.0, s[0]) / limit)


def require_symmetric(m: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    if m.shape[0] != m.shape[1]:
        raise NonSquare(f"matrix is {m.shape[0]}x{m.shape[1]}")
    if m.size == 0:
        return m
    dev = np.max(np.abs(m - m.T))
    if dev > tol * max(1.0, spectral_norm(m)):
        raise NotSymmetric(f"asymmetry {dev:.3e} exceeds tolerance")
    # exact symmetrization so downstream eigh sees a symmetric matrix
    return 0.5 * (m + m.T)


def eig_sym(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    a = require_symmetric(as_matrix(m))
    if a.size == 0:
        return np.zeros(0), np.zeros((0, 0))
    lam, vec = np.linalg.eigh(a)
    return lam, vec


def is_psd(m, tol: float = 1e-8) -> bool:
    """True iff lambda_min(m) >= -tol * max(1, ||m||)."""
    a = require_symmetric(as_matrix(m))
    if a.size == 0:
        return True
    lam = np.linalg.eigvalsh(a)
    return bool(lam[0] >= -tol * max(1.0, spectral_norm(a)))


def is_nsd(m, tol: float = 1e-8) -> bool:
    return is_psd(-as_matrix(m), tol)


def factor_gram(m, rank_tol: float = 1e-12) -> np.ndarray:
    """Factor a PSD matrix as L^T L with L of full row rank.

    Rows corresponding to eigenvalues <= rank_tol * lambda_max are dropped,
    so the row count of L equals the numerical rank of m.
    """
    a = require_symmetric(as_matrix(m))
    n = a.shape[0]
    if a.size == 0:
        return np.zeros((0, n))
    lam, vec = np.linalg.eigh(a)
    lam_max = max(float(lam[-1]), 0.0)
    scale = max(1.0, spectral_norm(a))
    if lam[0] < -max(rank_tol * lam_max, 1e-10 * scale):
        raise NotPsd(f"lambda_min = {lam[0]:.3e}")
    keep = lam > max(rank_tol * lam_max, rank_tol)
    return np.diag(np.sqrt(lam[keep])) @ vec[:, keep].T


class SymBlock:
    """Symmetric block matrix defined by its upper triangle.

    Lower-triangle blocks are mirrored from the upper triangle at
    materialization, so the result equals its own transpose exactly.
    """

    def __init__(self, block_rows):
        self.block_rows = [int(s) for s in block_rows]
        if any(s < 0 for s in self.block_rows):
            raise DimensionMismatch("block sizes must be nonnegative")
        self._blocks: dict[tuple[int, int], np.ndarray] = {}

    @property
    def size(self) -> int:
        return sum(self.block_rows)

    def set(self, i: int, j: int, block) -> "SymBlock":
        if j < i:
            raise DimensionMismatch("set upper-triangle blocks only (i <= j)")
        b = as_matrix(block)
        want = (self.block_rows[i], self.block_rows[j])
        if b.shape != want:
            raise DimensionMismatch(f"block ({i},{j}) must be {want}, got {b.shape}")
        if i == j:
            b = 0.5 * (b + b.T)  # exact: elementwise mean of mirrored entries
        self._blocks[(i, j)] = b
        return self

    def get(self, i: int, j: int) -> np.ndarray:
        if j >= i:
            blk = self._blocks.get((i, j))
            if blk is None:
                return np.zeros((self.block_rows[i], self.block_rows[j]))
            return blk
        return self.get(j, i).T

    def materialize(self) -> np.ndarray:
        n = len(self.block_rows)
        if self.size == 0:
            return np.zeros((0, 0))
        rows = [[self.get(i, j) for j in range(n)] for i in range(n)]
        return np.block(rows)


def schur_complement_nsd(top_left, off_diag) -> SymBlock:
    """Embed F + L^T L <= 0 as the block matrix [[F, L^T], [L, -I]].

    The materialized matrix is NSD iff top_left + off_diag^T off_diag is NSD.
    """
    f = require_symmetric(as_matrix(top_left))
    ell = as_matrix(off_diag)
    if ell.shape[1] != f.shape[0]:
        raise DimensionMismatch(
            f"off_diag has {ell.shape[1]} columns, top_left is {f.shape[0]}x{f.shape[0]}"
        )
    out = SymBlock([f.shape[0], ell.shape[0]])
    out.set(0, 0, f)
    out.set(0, 1, ell.T)
    out.set(1, 1, -np.eye(ell.shape[0]))
    return out


# ---------------------------------------------------------------------------
# Backend-agnostic block assembly (numpy arrays or cvxpy expressions).
# ---------------------------------------------------------------------------

def sym(expr):
    """expr + expr^T for numpy arrays or cvxpy expressions."""
    return expr + expr.T


def mm(shape, *factors):
    """Chain matrix products, collapsing to a zero block when an inner
    dimension is zero (cvxpy cannot represent zero-size operands)."""
    if any(0 in f.shape for f in factors) or 0 in shape:
        return np.zeros(shape)
    out = factors[0]
    for f in factors[1:]:
        out = out @ f
    return out


def stack_blocks(sizes, cells, backend="numpy"):
    """Assemble a square block matrix from a {(i, j): block} map.

    `sizes` give the row/column partition; zero-size channels are dropped.
    Missing cells are zero-filled. `backend` is "numpy" or "cvxpy".
    """
    keep = [i for i, s in enumerate(sizes) if s > 0]
    if not keep:
        return np.zeros((0, 0))
    rows = []
    for i in keep:
        row = []
        for j in keep:
            c = cells.get((i, j))
            if c is None:
                c = np.zeros((sizes[i], sizes[j]))
            row.append(c)
        rows.append(row)
    if backend == "numpy":
        return np.block(rows)
    import cvxpy as cp

    return cp.bmat(rows)
