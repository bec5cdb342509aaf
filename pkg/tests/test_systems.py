import numpy as np
import pytest

from helpers import rand_controller, rand_plant
from dissipic.errors import DimensionMismatch, FixedPointDiverged, NotDiagonal
from dissipic.systems import (
    FixedPointCfg,
    RinnController,
    StorageCertificate,
    SupplyRate,
    UncertainLtiPlant,
    check_wellposed,
    eval_controller,
    plant_to_system,
)


def test_eval_controller_explicit_network():
    k = RinnController.zeros(1, 2, 2, 1).with_blocks(D_kvy=np.eye(2))
    u, w, xdot = eval_controller(k, [0.0], [0.0, 0.0])
    assert np.allclose(w, 0.0) and np.allclose(u, 0.0) and np.allclose(xdot, 0.0)


def test_eval_controller_scalar_tanh():
    # w = tanh(0.5 w + 1); root frozen from the bisection oracle in test_kernels
    k = RinnController.zeros(1, 1, 1, 1).with_blocks(
        D_kvw=[[0.5]], D_kvy=[[1.0]], D_kuw=[[1.0]])
    u, w, _ = eval_controller(k, [0.0], [1.0])
    assert abs(w[0] - 0.8952191962) <= 1e-8
    assert abs(u[0] - w[0]) <= 1e-12


def test_eval_controller_lti_case():
    rng = np.random.default_rng(0)
    k = rand_controller(rng, n_k=2, n_phi=3, n_y=2, n_u=2, activation="zero")
    x, y = rng.standard_normal(2), rng.standard_normal(2)
    u, w, xdot = eval_controller(k, x, y)
    assert np.allclose(w, 0.0)
    assert np.allclose(u, k.C_ku @ x + k.D_kuy @ y)
    assert np.allclose(xdot, k.A_k @ x + k.B_ky @ y)


def test_eval_controller_divergence_flagged():
    # w = relu(2w + 1) has no solution, so the residual cannot reach tol
    k = RinnController.zeros(1, 1, 1, 1).with_blocks(
        D_kvw=np.array([[2.0]]), D_kvy=np.array([[1.0]]))
    k = RinnController(k.A_k, k.B_kw, k.B_ky, k.C_kv, k.D_kvw, k.D_kvy,
                       k.C_ku, k.D_kuw, k.D_kuy, activation="relu")
    with pytest.raises(FixedPointDiverged):
        eval_controller(k, [0.0], [1.0], FixedPointCfg(max_iter=120))


def test_eval_controller_sector_property():
    rng = np.random.default_rng(1)
    for _ in range(100):
        k = rand_controller(rng, n_k=3, n_phi=4, n_y=2, n_u=1, wellposed=True)
        x, y = rng.standard_normal(3), rng.standard_normal(2)
        _, w, _ = eval_controller(k, x, y)
        v = k.C_kv @ x + k.D_kvw @ w + k.D_kvy @ y
        assert np.all(w * (v - w) >= -1e-12)


def test_check_wellposed_examples():
    k = RinnController.zeros(1, 2, 1, 1)
    assert check_wellposed(k, np.eye(2))
    k_id = k.with_blocks(D_kvw=np.eye(2))
    assert not check_wellposed(k_id, np.eye(2))
    k3 = RinnController.zeros(1, 3, 1, 1).with_blocks(D_kvw=0.5 * np.eye(3))
    assert check_wellposed(k3, np.diag([1.0, 2.0, 3.0]))


def test_check_wellposed_rejects_offdiagonal():
    k = RinnController.zeros(1, 2, 1, 1)
    with pytest.raises(NotDiagonal):
        check_wellposed(k, np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_plant_to_system_open_loop():
    rng = np.random.default_rng(2)
    p = rand_plant(rng)
    sys = plant_to_system(p)
    assert np.array_equal(sys.A, p.A_p)
    assert np.array_equal(sys.B_d, p.B_pd)
    assert np.array_equal(sys.C_e, p.C_pe)
    assert sys.n_v == p.n_v and sys.n_w == p.n_w


def test_plant_to_system_zero_controller():
    rng = np.random.default_rng(3)
    p = rand_plant(rng)
    k = RinnController.zeros(2, 0, p.n_y, p.n_u)
    sys = plant_to_system(p, k)
    assert np.allclose(sys.A, np.block([
        [p.A_p, np.zeros((p.n_p, 2))], [np.zeros((2, p.n_p + 2))]]))


def test_plant_shape_validation():
    with pytest.raises(DimensionMismatch):
        UncertainLtiPlant(
            A_p=np.eye(2), B_pw=np.zeros((3, 1)), B_pd=np.zeros((2, 0)),
            B_pu=np.zeros((2, 1)), C_pv=np.zeros((1, 2)), D_pvw=np.zeros((1, 1)),
            D_pvd=np.zeros((1, 0)), D_pvu=np.zeros((1, 1)), C_pe=np.eye(2),
            D_pew=np.zeros((2, 1)), D_ped=np.zeros((2, 0)), D_peu=np.zeros((2, 1)),
            C_py=np.zeros((1, 2)), D_pyw=np.zeros((1, 1)), D_pyd=np.zeros((1, 0)))


def test_json_round_trips():
    rng = np.random.default_rng(4)
    p = rand_plant(rng, n_d=0)  # exercise a zero-width channel
    p2 = UncertainLtiPlant.from_json_dict(p.to_json_dict())
    for name in ("A_p", "B_pw", "B_pd", "C_pe", "D_pyw"):
        assert np.array_equal(getattr(p, name), getattr(p2, name))

    k = rand_controller(rng, n_phi=0)
    k2 = RinnController.from_json_dict(k.to_json_dict())
    assert k2.n_phi == 0
    assert np.array_equal(k.A_k, k2.A_k) and k.activation == k2.activation

    sys = plant_to_system(p)
    sys2 = type(sys).from_json_dict(sys.to_json_dict())
    assert np.array_equal(sys.A, sys2.A)

    X = SupplyRate.l2_gain(0.99, 1, 2, scale=0.5)
    X2 = SupplyRate.from_json_dict(X.to_json_dict())
    assert np.array_equal(X.matrix(), X2.matrix())

    cert = StorageCertificate(np.eye(3), np.diag([1.0, 2.0]), 0.5, 1e-9)
    cert2 = StorageCertificate.from_json_dict(cert.to_json_dict())
    assert np.array_equal(cert.P, cert2.P)
    assert cert2.lambda_p == 0.5


def test_supply_rate_values():
    X = SupplyRate.l2_gain(4.0, 1, 1)
    assert X.evaluate([1.0], [0.0]) == pytest.approx(4.0)
    assert X.evaluate([0.0], [3.0]) == pytest.approx(-9.0)
    X0 = SupplyRate.stability(0, 2)
    assert X0.matrix().shape == (2, 2)
    assert X0.evaluate(np.zeros(0), [1.0, 2.0]) == 0.0
    Xp = SupplyRate.passivity(2)
    assert Xp.evaluate([1.0, 2.0], [3.0, -1.0]) == pytest.approx(1.0)


def test_storage_certificate_validation():
    with pytest.raises(NotDiagonal):
        StorageCertificate(np.eye(2), np.array([[1.0, 0.2], [0.2, 1.0]]))
    c = StorageCertificate(2.0 * np.eye(2), np.zeros((0, 0)))
    assert c.storage([1.0, 1.0]) == pytest.approx(4.0)


def test_controller_flatten_roundtrip():
    rng = np.random.default_rng(5)
    k = rand_controller(rng, n_k=2, n_phi=3, n_y=2, n_u=1)
    vec = k.flatten()
    k2 = k.unflatten(vec)
    assert k.frobenius_distance(k2) == 0.0
    k3 = k.unflatten(vec + 1e-3)
    assert k.frobenius_distance(k3) == pytest.approx(1e-3 * np.sqrt(vec.size))


def test_zero_controller_e_trajectory_equivalence():
    # closing the loop with theta = 0 leaves the e-trajectory of the
    # open-loop plant (u = 0) unchanged
    from dissipic.simulate import random_l2_bursts, simulate_lti_zoh

    rng = np.random.default_rng(6)
    for _ in range(10):
        p = rand_plant(rng, n_p=3, n_v=1, n_w=1, n_d=1, n_e=2, scale=0.4)
        k = RinnController.zeros(3, 2, p.n_y, p.n_u)
        open_sys = plant_to_system(p)
        closed = plant_to_system(p, k)
        dt, steps = 1e-3, 2000
        w = random_l2_bursts(rng, 1, steps, 1, dt)[0]
        d = random_l2_bursts(rng, 1, steps, 1, dt)[0]
        wd_open = np.hstack([w, d])
        wd_closed = np.hstack([w, np.zeros((steps, 2)), d])
        xs_o = simulate_lti_zoh(open_sys.A, np.hstack([open_sys.B_w, open_sys.B_d]),
                                np.zeros(3), wd_open, dt)[:-1]
        e_o = xs_o @ open_sys.C_e.T + w @ open_sys.D_ew.T + d @ open_sys.D_ed.T
        xs_c = simulate_lti_zoh(closed.A, np.hstack([closed.B_w, closed.B_d]),
                                np.zeros(6), wd_closed, dt)[:-1]
        e_c = (xs_c @ closed.C_e.T + wd_closed[:, :3] @ closed.D_ew.T
               + d @ closed.D_ed.T)
        assert np.max(np.abs(e_o - e_c)) <= 1e-9
