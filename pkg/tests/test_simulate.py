import numpy as np
import pytest
from scipy.linalg import expm

from helpers import first_order_lag, rand_stable_system
from dissipic.errors import NonFiniteState, ZeroInputEnergy
from dissipic.iqc import FilterRealization
from dissipic.simulate import (
    FlexrodCfg,
    PendulumCfg,
    bode_bound_check,
    connect_delta,
    empirical_l2_gain,
    energy,
    flexrod_env,
    flexrod_matrices,
    freq_response,
    pendulum_env,
    random_l2_bursts,
    rk4_zoh_step,
    rollout,
)
from dissipic.systems import RinnController, UncertainLtiSystem


def test_rk4_constant_state():
    x = rk4_zoh_step(lambda x: np.zeros_like(x), np.array([1.0, -2.0]), (), 0.1)
    assert np.allclose(x, [1.0, -2.0])


def test_rk4_exponential_decay():
    # frozen from the RK4 Taylor truncation of exp(-0.01)
    x = rk4_zoh_step(lambda x: -x, np.array([1.0]), (), 0.01)
    assert abs(x[0] - 0.99004983375) <= 1e-11


def test_rk4_matches_matrix_exponential_order():
    rng = np.random.default_rng(0)
    A = rand_stable_system(rng, n=3, n_d=0, n_e=1).A
    x0 = rng.standard_normal(3)
    exact = expm(A * 0.02) @ x0
    x = rk4_zoh_step(lambda x: A @ x, x0, (), 0.02)
    assert np.max(np.abs(x - exact)) <= 10 * np.linalg.norm(A, 2) ** 5 * 0.02 ** 5


def test_rk4_order_convergence():
    rng = np.random.default_rng(1)
    A = rand_stable_system(rng, n=3, n_d=0, n_e=1).A
    x0 = rng.standard_normal(3)
    T = 0.64

    def err(dt):
        x = x0.copy()
        for _ in range(int(round(T / dt))):
            x = rk4_zoh_step(lambda x: A @ x, x, (), dt)
        return np.max(np.abs(x - expm(A * T) @ x0))

    e1, e2 = err(0.04), err(0.02)
    assert e1 / e2 > 12  # ~16x for a 4th-order method


def test_rk4_rejects_nonfinite():
    with np.errstate(over="ignore"), pytest.raises(NonFiniteState):
        rk4_zoh_step(lambda x: x ** 5, np.array([50.0]), (), 10.0)


def test_pendulum_parameters_and_sector():
    env = pendulum_env()
    p = env.design_plant
    assert np.allclose(p.A_p, [[0.0, 1.0], [0.0, -0.05 / (0.15 * 0.25)]])
    assert np.allclose(p.B_pw, [[0.0], [9.81 / 0.5]])
    assert abs(p.B_pw[1, 0] - 19.62) <= 1e-12
    assert np.allclose(p.B_pu, [[0.0], [1.0 / (0.15 * 0.25)]])
    assert np.allclose(env.design_multiplier, [[0.0, 1.0], [1.0, -2.0]])
    # sin(x)/x stays in the sector [0, 1] on [-pi, pi]
    xs = np.linspace(-np.pi, np.pi, 20001)
    xs = xs[np.abs(xs) > 1e-9]
    ratio = np.sin(xs) / xs
    assert np.all(ratio >= 0.0) and np.all(ratio <= 1.0)


def test_pendulum_rollout_equilibrium_and_instability():
    env = pendulum_env()
    traj = rollout(env, None, x0=np.zeros(2))
    assert not traj.terminated
    assert np.max(np.abs(traj.x)) == 0.0
    assert np.allclose(traj.reward, 1.0)  # exp(0) while alive
    traj2 = rollout(env, None, x0=np.array([0.1, 0.0]))
    assert np.max(np.abs(traj2.x[:, 0])) > 0.5  # upright is unstable


def test_pendulum_rollout_termination_zero_fills():
    env = pendulum_env()
    traj = rollout(env, None, x0=np.array([2.0, 7.0]))
    assert traj.terminated
    alive = np.nonzero(traj.reward)[0]
    assert alive.size < env.horizon
    # rewards after the violation are exactly zero
    assert np.all(traj.reward[alive[-1] + 1:] == 0.0)


def test_rollout_saturation_applied():
    env = pendulum_env()
    k = RinnController.zeros(2, 0, 1, 1).with_blocks(D_kuy=np.array([[100.0]]))
    traj = rollout(env, k, x0=np.array([1.0, 0.0]))
    assert np.max(np.abs(traj.u)) <= 2.0 + 1e-12


def test_flexrod_matrices():
    cfg = FlexrodCfg()
    A_f, B_f, C_f = flexrod_matrices(cfg)
    rhoL = 0.1
    M = np.array([[1.0 + rhoL, 0.1 + rhoL / 3], [0.1 + rhoL / 3, 0.1 + rhoL / 5]])
    K22 = 4 * 200e9 * (np.pi / 4 * 1e-8) / 1.0
    assert np.allclose(-A_f[2:, :2], np.linalg.inv(M) @ np.diag([0.0, K22]))
    assert np.allclose(C_f, [[1.0, 1.0, 0.0, 0.0]])
    env, rigid = flexrod_env(cfg)
    # rigid model: double integrator with DC gain 1/(m_b + m_r + rho L)
    assert np.allclose(rigid.B_pd, [[0.0], [1.0 / 1.1]])
    assert np.allclose(rigid.B_pu, rigid.B_pd)
    assert np.allclose(env.design_multiplier, [[0.05, 0.0], [0.0, -5.0]])


def test_empirical_gain_passthrough():
    # e = d exactly: one useless state, direct feedthrough
    sys = UncertainLtiSystem(
        A=[[-1.0]], B_w=np.zeros((1, 0)), B_d=[[0.0]],
        C_v=np.zeros((0, 1)), D_vw=np.zeros((0, 0)), D_vd=np.zeros((0, 1)),
        C_e=[[0.0]], D_ew=np.zeros((1, 0)), D_ed=[[1.0]])
    rng = np.random.default_rng(2)
    g = empirical_l2_gain(sys, random_l2_bursts(rng, 3, 2000, 1, 1e-3), 1e-3)
    assert abs(g - 1.0) <= 1e-9


def test_empirical_gain_first_order_lag():
    sys = first_order_lag()
    dt, steps = 1e-3, 60000
    t = np.arange(steps) * dt
    # long low-frequency burst approaches the DC gain of 1 from below
    w0 = 2 * np.pi * 0.05
    window = np.sin(np.pi * np.clip(t / (steps * dt), 0, 1)) ** 2
    d = (np.sin(w0 * t) * window)[:, None]
    g = empirical_l2_gain(sys, [d], dt)
    assert g <= 1.0 + 1e-6
    assert g >= 0.9
    with pytest.raises(ZeroInputEnergy):
        empirical_l2_gain(sys, [np.zeros((100, 1))], dt)


def test_empirical_gain_with_delta_at_bound():
    # w = gain * v makes the norm-bound QC tight; the loop stays well-posed
    rng = np.random.default_rng(3)
    sys = rand_stable_system(rng, n=3, n_v=1, n_w=1, n_d=1, n_e=1, scale=0.4)
    delta = FilterRealization.static_gain([[0.1]])
    g_open = empirical_l2_gain(sys, random_l2_bursts(rng, 3, 3000, 1, 1e-3), 1e-3)
    g_closed = empirical_l2_gain(sys, random_l2_bursts(rng, 3, 3000, 1, 1e-3), 1e-3,
                                 delta=delta)
    assert np.isfinite(g_open) and np.isfinite(g_closed)


def test_bode_bound_flexrod():
    cfg = FlexrodCfg()
    A_f, B_f, C_f = flexrod_matrices(cfg)
    flexible = (A_f, B_f, C_f, np.zeros((1, 1)))
    rigid = (np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0 / 1.1]]),
             np.array([[1.0, 0.0]]), np.zeros((1, 1)))
    grid = np.logspace(-2, 2, 100)
    assert bode_bound_check(rigid, rigid, 0.1, grid)  # identical models
    assert bode_bound_check(rigid, flexible, 0.1, grid)
    # a much tighter bound fails somewhere on the grid
    assert not bode_bound_check(rigid, flexible, 1e-5, grid)


def test_freq_response_lag():
    sys = ( [[-1.0]], [[1.0]], [[1.0]], [[0.0]] )
    val = freq_response(sys, 1.0)
    assert abs(val[0, 0] - 1.0 / (1j + 1.0)) <= 1e-12


def test_connect_delta_matches_manual_series():
    # with C_v = [I 0...] picking states and D_vw = 0, closing with a static
    # gain g adds g * B_w C_v to A
    rng = np.random.default_rng(4)
    sys = rand_stable_system(rng, n=3, n_v=1, n_w=1, n_d=1, n_e=1)
    g = 0.3
    A, B, C, D = connect_delta(sys, FilterRealization.static_gain([[g]]))
    assert np.allclose(A, sys.A + g * sys.B_w @ sys.C_v)
    assert np.allclose(B, sys.B_d + g * sys.B_w @ sys.D_vd)


def test_trajectory_columns_and_energy():
    env = pendulum_env(PendulumCfg(horizon=50))
    traj = rollout(env, None, seed=5)
    names, data = traj.columns()
    assert names[0] == "t" and names[-1] == "reward"
    assert data.shape == (50, len(names))
    assert energy(np.ones(100), 0.01) == pytest.approx(0.99)  # trapezoid, 100 nodes
