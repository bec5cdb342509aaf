import numpy as np
import pytest

from dissipic.errors import DimensionMismatch, NonSquare, NotPsd, NotSymmetric
from dissipic.matrix_core import (
    SymBlock,
    eig_sym,
    factor_gram,
    is_nsd,
    is_psd,
    schur_complement_nsd,
    stack_blocks,
)


def test_eig_sym_diagonal():
    lam, vec = eig_sym(np.diag([2.0, 1.0]))
    assert np.allclose(lam, [1.0, 2.0])
    assert np.allclose(vec @ np.diag(lam) @ vec.T, np.diag([2.0, 1.0]))


def test_eig_sym_exchange():
    lam, _ = eig_sym([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(lam, [-1.0, 1.0])


def test_eig_sym_recomposition():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.standard_normal((5, 5))
        m = a + a.T
        lam, vec = eig_sym(m)
        err = np.max(np.abs(vec @ np.diag(lam) @ vec.T - m))
        assert err <= 1e-9 * max(1.0, np.linalg.norm(m, 2))
        assert np.all(np.diff(lam) >= 0)


def test_eig_sym_errors():
    with pytest.raises(NonSquare):
        eig_sym(np.zeros((2, 3)))
    with pytest.raises(NotSymmetric):
        eig_sym([[0.0, 1.0], [0.0, 0.0]])


def test_is_psd_examples():
    assert is_psd(np.zeros((3, 3)), tol=1e-8)
    assert is_psd(np.diag([1.0, -1e-12]), tol=1e-8)
    assert not is_psd(np.diag([1.0, -1.0]), tol=1e-8)
    assert is_nsd(np.diag([-1.0, 0.0]))


def test_schur_complement_decoupled():
    blk = schur_complement_nsd(-np.eye(2), np.zeros((1, 2)))
    assert np.allclose(blk.materialize(), np.diag([-1.0, -1.0, -1.0]))


def test_schur_complement_nsd_verdicts():
    # F = -2, L = 1: Schur complement -2 + 1 = -1 <= 0
    blk = schur_complement_nsd([[-2.0]], [[1.0]])
    mat = blk.materialize()
    assert np.allclose(mat, [[-2.0, 1.0], [1.0, -1.0]])
    assert is_nsd(mat)
    # F = 0, L = 1: determinant -1 with trace -1, so one positive eigenvalue
    mat = schur_complement_nsd([[0.0]], [[1.0]]).materialize()
    assert np.allclose(mat, [[0.0, 1.0], [1.0, -1.0]])
    assert not is_nsd(mat)


def test_factor_gram_identity():
    L = factor_gram(np.eye(3))
    assert L.shape == (3, 3)
    assert np.allclose(L.T @ L, np.eye(3))


def test_factor_gram_rank():
    assert factor_gram(np.zeros((2, 2))).shape == (0, 2)
    L = factor_gram([[4.0, 2.0], [2.0, 1.0]])
    assert L.shape == (1, 2)
    assert np.allclose(L.T @ L, [[4.0, 2.0], [2.0, 1.0]])


def test_factor_gram_rejects_indefinite():
    with pytest.raises(NotPsd):
        factor_gram(np.diag([1.0, -1.0]))


def test_factor_gram_roundtrip_random():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = rng.integers(1, 6)
        r = rng.integers(0, n + 1)
        B = rng.standard_normal((r, n))
        m = B.T @ B
        L = factor_gram(m)
        assert np.max(np.abs(L.T @ L - m)) <= 1e-9 * max(1.0, np.linalg.norm(m, 2))


def test_symblock_exact_symmetry():
    rng = np.random.default_rng(2)
    blk = SymBlock([2, 3, 1])
    blk.set(0, 0, rng.standard_normal((2, 2)))
    blk.set(0, 1, rng.standard_normal((2, 3)))
    blk.set(1, 2, rng.standard_normal((3, 1)))
    blk.set(2, 2, [[-1.0]])
    m = blk.materialize()
    assert m.shape == (6, 6)
    assert np.array_equal(m, m.T)  # exact, not approximate


def test_symblock_shape_check():
    blk = SymBlock([2, 1])
    with pytest.raises(DimensionMismatch):
        blk.set(0, 1, np.zeros((1, 2)))
    with pytest.raises(DimensionMismatch):
        blk.set(1, 0, np.zeros((1, 2)))


def test_stack_blocks_drops_empty_channels():
    cells = {(0, 0): np.eye(2), (0, 2): np.ones((2, 1)), (2, 2): -np.eye(1)}
    m = stack_blocks([2, 0, 1], cells, "numpy")
    assert m.shape == (3, 3)
    assert np.allclose(m, [[1, 0, 1], [0, 1, 1], [0, 0, -1]])
