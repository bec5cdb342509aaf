import numpy as np
import pytest

from helpers import rand_controller, rand_plant
from dissipic.errors import DimensionMismatch
from dissipic.interconnect import (
    CL_NAMES,
    close_loop,
    close_loop_oracle,
    closed_loop_affine_map,
)
from dissipic.systems import RinnController


def test_zero_controller():
    rng = np.random.default_rng(0)
    p = rand_plant(rng)
    k = RinnController.zeros(2, 3, p.n_y, p.n_u)
    cl = close_loop(p, k)
    assert np.allclose(cl.A, np.block([
        [p.A_p, np.zeros((p.n_p, 2))], [np.zeros((2, p.n_p + 2))]]))
    assert np.allclose(cl.B_w, np.block([
        [p.B_pw, np.zeros((p.n_p, 3))], [np.zeros((2, p.n_w + 3))]]))
    assert np.allclose(cl.C_e, np.hstack([p.C_pe, np.zeros((p.n_e, 2))]))


def test_static_output_feedback():
    rng = np.random.default_rng(1)
    p = rand_plant(rng, n_u=2, n_y=2)
    k = RinnController.zeros(0, 0, 2, 2).with_blocks(D_kuy=rng.standard_normal((2, 2)))
    cl = close_loop(p, k)
    assert np.allclose(cl.A, p.A_p + p.B_pu @ k.D_kuy @ p.C_py)
    assert np.allclose(cl.D_ed, p.D_ped + p.D_peu @ k.D_kuy @ p.D_pyd)


def test_dimension_mismatch():
    rng = np.random.default_rng(2)
    p = rand_plant(rng, n_y=1)
    k = RinnController.zeros(2, 2, 2, p.n_u)
    with pytest.raises(DimensionMismatch):
        close_loop(p, k)


def test_matches_elimination_oracle():
    rng = np.random.default_rng(3)
    for _ in range(30):
        dims = dict(
            n_p=int(rng.integers(1, 5)), n_v=int(rng.integers(0, 3)),
            n_w=int(rng.integers(0, 3)), n_d=int(rng.integers(0, 3)),
            n_e=int(rng.integers(1, 3)), n_u=int(rng.integers(1, 3)),
            n_y=int(rng.integers(1, 3)))
        p = rand_plant(rng, **dims)
        k = rand_controller(rng, n_k=int(rng.integers(0, 5)),
                            n_phi=int(rng.integers(0, 8)),
                            n_y=dims["n_y"], n_u=dims["n_u"])
        a = close_loop(p, k)
        b = close_loop_oracle(p, k)
        for name in CL_NAMES:
            got, want = getattr(a, name), getattr(b, name)
            assert got.shape == want.shape
            if got.size:
                assert np.max(np.abs(got - want)) <= 1e-10


def test_oracle_identical_for_zero_controller():
    rng = np.random.default_rng(4)
    p = rand_plant(rng)
    k = RinnController.zeros(2, 2, p.n_y, p.n_u)
    a, b = close_loop(p, k), close_loop_oracle(p, k)
    for name in CL_NAMES:
        assert np.allclose(getattr(a, name), getattr(b, name), atol=1e-14)


def test_affine_map_constant_part():
    rng = np.random.default_rng(5)
    p = rand_plant(rng)
    amap = closed_loop_affine_map(p, n_k=2, n_phi=3)
    k0 = RinnController.zeros(2, 3, p.n_y, p.n_u)
    zero_cl = close_loop(p, k0)
    ev = amap.evaluate(k0)
    for name in CL_NAMES:
        assert np.allclose(ev[name], getattr(zero_cl, name), atol=1e-14)


def test_affine_map_matches_close_loop():
    rng = np.random.default_rng(6)
    p = rand_plant(rng)
    amap = closed_loop_affine_map(p, n_k=2, n_phi=3)
    for _ in range(5):
        k = rand_controller(rng, n_k=2, n_phi=3, n_y=p.n_y, n_u=p.n_u)
        ev = amap.evaluate(k)
        cl = close_loop(p, k)
        for name in CL_NAMES:
            if ev[name].size:
                assert np.max(np.abs(ev[name] - getattr(cl, name))) <= 1e-12


def test_affine_map_affinity_identity():
    rng = np.random.default_rng(7)
    p = rand_plant(rng)
    amap = closed_loop_affine_map(p, n_k=2, n_phi=2)
    k1 = rand_controller(rng, n_k=2, n_phi=2, n_y=p.n_y, n_u=p.n_u)
    k2 = rand_controller(rng, n_k=2, n_phi=2, n_y=p.n_y, n_u=p.n_u)
    ksum = k1.unflatten(k1.flatten() + k2.flatten())
    k0 = RinnController.zeros(2, 2, p.n_y, p.n_u)
    for name in CL_NAMES:
        resid = (amap.evaluate(ksum)[name] - amap.evaluate(k1)[name]
                 - amap.evaluate(k2)[name] + amap.evaluate(k0)[name])
        if resid.size:
            assert np.max(np.abs(resid)) <= 1e-10


def test_coupled_component_simulation_matches_assembly():
    # RK4 on plant and controller as two coupled components (u, y resolved
    # each evaluation) vs RK4 on the assembled closed-loop matrices, both
    # driven by the same external (w, d)
    from dissipic.simulate import random_l2_bursts, rk4_zoh_step

    rng = np.random.default_rng(8)
    for _ in range(5):
        p = rand_plant(rng, n_p=3, n_v=1, n_w=1, n_d=1, n_e=2, n_u=1, n_y=1,
                       scale=0.4)
        k = rand_controller(rng, n_k=2, n_phi=2, n_y=1, n_u=1, scale=0.4)
        cl = close_loop(p, k)
        dt, steps = 1e-3, 5000
        w = random_l2_bursts(rng, 1, steps, cl.n_w, dt)[0]
        d = random_l2_bursts(rng, 1, steps, cl.n_d, dt)[0]

        def coupled(z, w_all, d_k):
            x_p, x_k = z[:3], z[3:]
            w_p, w_k = w_all[:1], w_all[1:]
            y = p.C_py @ x_p + p.D_pyw @ w_p + p.D_pyd @ d_k
            u = k.C_ku @ x_k + k.D_kuw @ w_k + k.D_kuy @ y
            return np.concatenate([
                p.A_p @ x_p + p.B_pw @ w_p + p.B_pd @ d_k + p.B_pu @ u,
                k.A_k @ x_k + k.B_kw @ w_k + k.B_ky @ y,
            ])

        def monolithic(z, w_all, d_k):
            return cl.A @ z + cl.B_w @ w_all + cl.B_d @ d_k

        z1 = z2 = np.zeros(5)
        worst = 0.0
        for i in range(steps):
            e1 = (p.C_pe @ z1[:3] + p.D_pew @ w[i, :1] + p.D_ped @ d[i]
                  + p.D_peu @ (k.C_ku @ z1[3:] + k.D_kuw @ w[i, 1:]
                               + k.D_kuy @ (p.C_py @ z1[:3] + p.D_pyw @ w[i, :1]
                                            + p.D_pyd @ d[i])))
            e2 = cl.C_e @ z2 + cl.D_ew @ w[i] + cl.D_ed @ d[i]
            worst = max(worst, float(np.max(np.abs(z1 - z2))),
                        float(np.max(np.abs(e1 - e2))))
            z1 = rk4_zoh_step(coupled, z1, (w[i], d[i]), dt)
            z2 = rk4_zoh_step(monolithic, z2, (w[i], d[i]), dt)
        assert worst <= 1e-8
