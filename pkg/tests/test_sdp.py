import numpy as np
import pytest

from dissipic.errors import Infeasible
from dissipic.sdp import SdpProblem, frob_distance, solve_sdp


def test_minimize_scalar_psd():
    p = SdpProblem()
    x = p.matrix_var("x", 1, 1, symmetric=True)
    p.add_psd(x)
    p.minimize(x[0, 0])
    sol = solve_sdp(p)
    assert abs(sol["x"][0, 0]) <= 1e-7


def test_lyapunov_feasible():
    A = np.diag([-1.0, -2.0])
    p = SdpProblem()
    P = p.matrix_var("P", 2, 2, symmetric=True)
    t = p.scalar_var("t", nonneg=True)
    p.add_psd(P - np.eye(2))
    p.add_nsd(A.T @ P + P @ A + t * np.eye(2))
    p.add(t <= 1.0)
    p.maximize(t)
    sol = solve_sdp(p)
    Pv = sol["P"]
    assert np.max(np.linalg.eigvalsh(A.T @ Pv + Pv @ A)) <= -0.5


def test_lyapunov_infeasible():
    A = np.array([[1.0]])
    p = SdpProblem()
    P = p.matrix_var("P", 1, 1, symmetric=True)
    p.add_psd(P - np.eye(1))
    p.add_nsd(A.T @ P + P @ A)
    with pytest.raises(Infeasible):
        solve_sdp(p)


def test_lyapunov_agrees_with_eigenvalues():
    # feasibility of A^T P + P A <= 0, P >= I matches Hurwitz stability
    rng = np.random.default_rng(3)
    margin = 1e-4
    checked = 0
    for _ in range(200):
        A = rng.standard_normal((4, 4))
        re = np.max(np.linalg.eigvals(A).real)
        if abs(re) < margin:  # skip marginal instances per the stated margin
            continue
        p = SdpProblem()
        P = p.matrix_var("P", 4, 4, symmetric=True)
        t = p.scalar_var("t", nonneg=True)
        p.add_psd(P - np.eye(4))
        p.add_nsd(A.T @ P + P @ A + t * np.eye(4))
        p.add(t <= 1.0)
        p.maximize(t)
        try:
            solve_sdp(p)
            feasible = True
        except Infeasible:
            feasible = False
        assert feasible == (re < -margin)
        checked += 1
    assert checked >= 190


def test_frobenius_projection_matches_eigenvalue_clipping():
    # projection of a symmetric matrix onto the PSD cone has a closed form
    rng = np.random.default_rng(4)
    a = rng.standard_normal((4, 4))
    target = a + a.T
    lam, vec = np.linalg.eigh(target)
    oracle = vec @ np.diag(np.maximum(lam, 0.0)) @ vec.T

    p = SdpProblem()
    X = p.matrix_var("X", 4, 4, symmetric=True)
    p.add_psd(X)
    p.minimize(frob_distance([(X, target)]))
    sol = solve_sdp(p)
    # optimal value is tight; the argmin is flat near clipped eigenvalues
    assert abs(sol.objective - np.linalg.norm(oracle - target, "fro")) <= 1e-7
    assert np.max(np.abs(sol["X"] - oracle)) <= 1e-3


def test_diag_var_returns_diagonal():
    p = SdpProblem()
    L = p.diag_var("Lam", 3)
    p.add_psd(L - 0.5 * np.eye(3))
    p.minimize(frob_distance([(L, np.diag([1.0, 0.1, 2.0]))]))
    sol = solve_sdp(p)
    Lv = sol["Lam"]
    assert np.allclose(Lv, np.diag(np.diag(Lv)))
    assert np.allclose(np.diag(Lv), [1.0, 0.5, 2.0], atol=1e-6)
