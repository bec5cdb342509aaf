"""Continuous-time simulation with RK4 and zero-order-hold coupling,
benchmark environments, rollouts, empirical L2-gain estimation, and
frequency-response bound checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import _kernels
from .errors import DimensionMismatch, FixedPointDiverged, NonFiniteState, ZeroInputEnergy
from .iqc import FilterRealization
from .systems import FixedPointCfg, RinnController, UncertainLtiPlant, UncertainLtiSystem

__all__ = [
    "Environment",
    "Trajectory",
    "rk4_zoh_step",
    "rollout",
    "PendulumCfg",
    "pendulum_env",
    "FlexrodCfg",
    "flexrod_env",
    "empirical_l2_gain",
    "bode_bound_check",
    "freq_response",
    "connect_delta",
    "simulate_lti_zoh",
    "random_l2_bursts",
    "energy",
]


# ---------------------------------------------------------------------------
# Generic integration utilities
# ---------------------------------------------------------------------------

def rk4_zoh_step(dynamics, state, held_inputs, dt: float):
    """Classical RK4 update of `state` with all inputs held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(state, dtype=float)
    k1 = np.asarray(dynamics(x, *held_inputs), dtype=float)
    k2 = np.asarray(dynamics(x + 0.5 * dt * k1, *held_inputs), dtype=float)
    k3 = np.asarray(dynamics(x + 0.5 * dt * k2, *held_inputs), dtype=float)
    k4 = np.asarray(dynamics(x + dt * k3, *held_inputs), dtype=float)
    out = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("state left the finite range during integration")
    return out


def simulate_lti_zoh(A, B, x0, u_seq, dt: float) -> np.ndarray:
    """Exact propagation of x' = Ax + Bu under piecewise-constant u.

    u_seq has shape (N, n_u); returns states at the N+1 grid nodes.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float)
    if B.ndim != 2:
        B = B.reshape(n, -1) if B.size else B.reshape(n, 0)
    m = B.shape[1]
    u_seq = np.asarray(u_seq, dtype=float)
    if u_seq.ndim != 2:
        u_seq = u_seq.reshape(-1, m) if u_seq.size else u_seq.reshape(0, m)
    if n == 0:
        return np.zeros((u_seq.shape[0] + 1, 0))
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A * dt
    aug[:n, n:] = B * dt
    M = expm(aug)
    Ad, Bd = M[:n, :n], M[:n, n:]
    xs = np.zeros((u_seq.shape[0] + 1, n))
    xs[0] = np.asarray(x0, dtype=float).reshape(n)
    for i in range(u_seq.shape[0]):
        xs[i + 1] = Ad @ xs[i] + Bd @ u_seq[i]
    return xs


def energy(signal: np.ndarray, dt: float) -> float:
    """Trapezoidal integral of the squared 2-norm of a sampled signal.

    1-D input is a scalar signal over time; 2-D input is (time, channels).
    """
    sig = np.asarray(signal, dtype=float)
    if sig.ndim == 1:
        sig = sig[:, None]
    sq = np.sum(sig ** 2, axis=1)
    return float(np.trapezoid(sq, dx=dt))


def connect_delta(sys: UncertainLtiSystem, delta: FilterRealization | None):
    """Eliminate the uncertainty channel with an LTI block w = Delta(v).

    Returns (A, B, C, D) from d to e over the stacked state (x, x_delta).
    `delta=None` means w = 0 (the channel is opened).
    """
    if delta is None:
        delta = FilterRealization(np.zeros((0, 0)), np.zeros((0, sys.n_v)),
                                  np.zeros((sys.n_w, 0)), np.zeros((sys.n_w, sys.n_v)))
    if delta.n_in != sys.n_v or delta.n_out != sys.n_w:
        raise DimensionMismatch("delta must map the v channel to the w channel")
    n, nq = sys.n, delta.n_states
    # w = C_d q + D_d v, v = C_v x + D_vw w + D_vd d
    lhs = np.eye(sys.n_w) - delta.D @ sys.D_vw
    if sys.n_w and np.linalg.cond(lhs) > 1e10:
        raise ValueError("algebraic loop between the system and delta is singular")
    sol = np.linalg.inv(lhs) if sys.n_w else lhs
    w_x = sol @ delta.D @ sys.C_v
    w_q = sol @ delta.C
    w_d = sol @ delta.D @ sys.D_vd
    v_x = sys.C_v + sys.D_vw @ w_x
    v_q = sys.D_vw @ w_q
    v_d = sys.D_vd + sys.D_vw @ w_d
    A = np.block([[sys.A + sys.B_w @ w_x, sys.B_w @ w_q],
                  [delta.B @ v_x, delta.A + delta.B @ v_q]])
    B = np.vstack([sys.B_d + sys.B_w @ w_d, delta.B @ v_d])
    C = np.hstack([sys.C_e + sys.D_ew @ w_x, sys.D_ew @ w_q])
    D = sys.D_ed + sys.D_ew @ w_d
    return A, B, C, D


def freq_response(ss, w: float) -> np.ndarray:
    """Transfer matrix C (jw I - A)^-1 B + D at one frequency."""
    A, B, C, D = [np.atleast_2d(np.asarray(m, dtype=float)) for m in ss]
    n = A.shape[0]
    if n == 0:
        return D.astype(complex)
    return C @ np.linalg.solve(1j * w * np.eye(n) - A, B) + D


# ---------------------------------------------------------------------------
# Environments and rollouts
# ---------------------------------------------------------------------------

@dataclass
class Environment:
    """Simulation environment; dynamics may be nonlinear."""

    name: str
    n_x: int
    n_u: int
    n_y: int
    n_d: int
    n_e: int
    dt: float
    horizon: int
    u_min: float
    u_max: float
    dynamics: object  # (x, u, d) -> xdot
    measure: object  # (x) -> y
    reward: object  # (x, u) -> float
    performance: object  # (x, u, d) -> e
    sample_init: object  # (rng) -> x0
    terminated: object  # (x) -> bool
    design_plant: UncertainLtiPlant | None = None
    design_multiplier: np.ndarray | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("time step must be positive")
        if self.u_min >= self.u_max:
            raise ValueError("saturation interval is empty")


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    d: np.ndarray
    e: np.ndarray
    reward: np.ndarray
    terminated: bool
    x_ctrl: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def total_reward(self) -> float:
        return float(np.sum(self.reward))

    def columns(self) -> tuple[list[str], np.ndarray]:
        names = (["t"]
                 + [f"x{i}" for i in range(self.x.shape[1])]
                 + [f"u{i}" for i in range(self.u.shape[1])]
                 + [f"y{i}" for i in range(self.y.shape[1])]
                 + [f"d{i}" for i in range(self.d.shape[1])]
                 + [f"e{i}" for i in range(self.e.shape[1])]
                 + ["reward"])
        data = np.column_stack([self.t, self.x, self.u, self.y, self.d, self.e, self.reward])
        return names, data


def rollout(env: Environment, controller: RinnController | None, seed=None,
            d_signal=None, x0=None, fp: FixedPointCfg = FixedPointCfg()) -> Trajectory:
    """Simulate one episode with alternating ZOH stepping.

    The control u(t_k) is evaluated from (x_k(t_k), y(t_k)), saturated, and
    held over the step; the controller state is advanced with y held; the
    plant is advanced with (u, d) held. After a termination violation the
    remaining rewards are zero and the state is frozen.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x0, dtype=float).reshape(env.n_x) if x0 is not None \
        else np.asarray(env.sample_init(rng), dtype=float).reshape(env.n_x)
    if d_signal is None:
        d_signal = np.zeros((env.horizon, env.n_d))
    d_signal = np.asarray(d_signal, dtype=float).reshape(env.horizon, env.n_d)
    n_k = controller.n_k if controller is not None else 0
    act = _kernels.activation_id(controller.activation) if controller is not None else 0
    xk = np.zeros(n_k)

    N = env.horizon
    X = np.zeros((N, env.n_x)); U = np.zeros((N, env.n_u)); Y = np.zeros((N, env.n_y))
    E = np.zeros((N, env.n_e)); R = np.zeros(N); XK = np.zeros((N, n_k))
    terminated = False
    for i in range(N):
        X[i] = x
        XK[i] = xk
        y = np.asarray(env.measure(x), dtype=float).reshape(env.n_y)
        Y[i] = y
        if terminated:
            continue  # frozen tail: zero reward, zero input
        if controller is not None:
            u, xk_next, _, res = _kernels.controller_step(
                controller.A_k, controller.B_kw, controller.B_ky,
                controller.C_kv, controller.D_kvw, controller.D_kvy,
                controller.C_ku, controller.D_kuw, controller.D_kuy,
                act, xk, y, env.dt, fp.tol, fp.max_iter, fp.alpha)
            if res > fp.tol:
                raise FixedPointDiverged(f"controller residual {res:.3e} at step {i}")
        else:
            u, xk_next = np.zeros(env.n_u), xk
        u = np.clip(u, env.u_min, env.u_max)
        d = d_signal[i]
        U[i] = u
        E[i] = np.asarray(env.performance(x, u, d), dtype=float).reshape(env.n_e)
        R[i] = float(env.reward(x, u))
        x = rk4_zoh_step(env.dynamics, x, (u, d), env.dt)
        xk = xk_next
        if env.terminated(x):
            terminated = True
    t = np.arange(N) * env.dt
    return Trajectory(t, X, U, Y, d_signal.copy(), E, R, terminated, XK)


# ---------------------------------------------------------------------------
# Inverted pendulum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PendulumCfg:
    mass: float = 0.15
    length: float = 0.5
    friction: float = 0.05
    gravity: float = 9.81
    dt: float = 0.01
    horizon: int = 201
    u_sat: float = 2.0
    init_angle: float = 0.6 * np.pi
    init_rate: float = 2.0
    term_angle: float = np.pi
    term_rate: float = 8.0


def pendulum_env(cfg: PendulumCfg = PendulumCfg()) -> Environment:
    """Torque-controlled pendulum about the upright; the sine term is the
    sector-[0, 1] uncertainty of the design plant."""
    m, ell, mu, g = cfg.mass, cfg.length, cfg.friction, cfg.gravity
    a = mu / (m * ell ** 2)
    b = g / ell
    c = 1.0 / (m * ell ** 2)

    def dynamics(x, u, d):
        return np.array([x[1], -a * x[1] + b * np.sin(x[0]) + c * u[0]])

    plant = UncertainLtiPlant(
        A_p=[[0.0, 1.0], [0.0, -a]], B_pw=[[0.0], [b]],
        B_pd=np.zeros((2, 0)), B_pu=[[0.0], [c]],
        C_pv=[[1.0, 0.0]], D_pvw=[[0.0]], D_pvd=np.zeros((1, 0)), D_pvu=[[0.0]],
        C_pe=np.eye(2), D_pew=np.zeros((2, 1)), D_ped=np.zeros((2, 0)),
        D_peu=np.zeros((2, 1)),
        C_py=[[1.0, 0.0]], D_pyw=[[0.0]], D_pyd=np.zeros((1, 0)),
    )
    return Environment(
        name="pendulum", n_x=2, n_u=1, n_y=1, n_d=0, n_e=2,
        dt=cfg.dt, horizon=cfg.horizon, u_min=-cfg.u_sat, u_max=cfg.u_sat,
        dynamics=dynamics,
        measure=lambda x: x[:1],
        reward=lambda x, u: float(np.exp(-u[0] ** 2)),
        performance=lambda x, u, d: x,
        sample_init=lambda rng: np.array([
            rng.uniform(-cfg.init_angle, cfg.init_angle),
            rng.uniform(-cfg.init_rate, cfg.init_rate)]),
        terminated=lambda x: bool(abs(x[0]) > cfg.term_angle or abs(x[1]) > cfg.term_rate),
        design_plant=plant,
        design_multiplier=np.array([[0.0, 1.0], [1.0, -2.0]]),
    )


# ---------------------------------------------------------------------------
# Flexible rod on a cart
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlexrodCfg:
    base_mass: float = 1.0
    tip_mass: float = 0.1
    rod_length: float = 1.0
    rod_density: float = 0.1
    rod_radius: float = 1e-2
    # Young's modulus of steel in Pa (2e11); the rod is steel
    youngs_modulus: float = 200e9
    tip_damping: float = 0.9
    rod_lumped_mass: float = 0.0  # m_r in the mass matrix; carried by rho*L
    dt: float = 1e-3
    horizon: int = 2000
    u_sat: float = 20.0
    init_base: float = 1.0
    init_tip: float = 0.44
    init_base_rate: float = 0.25
    init_tip_rate: float = 2.0
    delta_gain: float = 0.1
    multiplier_scale: float = 5.0


def flexrod_matrices(cfg: FlexrodCfg = FlexrodCfg()):
    """(A_f, B_f, C_f) of the 4-state flexible model, y = x_b + h."""
    rhoL = cfg.rod_density * cfg.rod_length
    M = np.array([
        [cfg.base_mass + cfg.rod_lumped_mass + rhoL, cfg.tip_mass + rhoL / 3.0],
        [cfg.tip_mass + rhoL / 3.0, cfg.tip_mass + rhoL / 5.0],
    ])
    area_moment = np.pi / 4.0 * cfg.rod_radius ** 4
    K = np.array([[0.0, 0.0],
                  [0.0, 4.0 * cfg.youngs_modulus * area_moment / cfg.rod_length ** 3]])
    B = np.array([[0.0, 0.0], [0.0, cfg.tip_damping]])
    Minv = np.linalg.inv(M)
    A_f = np.block([[np.zeros((2, 2)), np.eye(2)], [-Minv @ K, -Minv @ B]])
    B_f = np.vstack([np.zeros((2, 1)), Minv @ np.array([[1.0], [0.0]])])
    C_f = np.array([[1.0, 1.0, 0.0, 0.0]])
    return A_f, B_f, C_f


def flexrod_rigid_plant(cfg: FlexrodCfg = FlexrodCfg()) -> UncertainLtiPlant:
    """Uncertain rigid design model: double integrator with an input-driven
    norm-bounded uncertainty entering the base-position rate."""
    mass = cfg.base_mass + cfg.rod_lumped_mass + cfg.rod_density * cfg.rod_length
    return UncertainLtiPlant(
        A_p=[[0.0, 1.0], [0.0, 0.0]], B_pw=[[1.0], [0.0]],
        B_pd=[[0.0], [1.0 / mass]], B_pu=[[0.0], [1.0 / mass]],
        C_pv=[[0.0, 0.0]], D_pvw=[[0.0]], D_pvd=[[1.0]], D_pvu=[[1.0]],
        C_pe=np.eye(2), D_pew=np.zeros((2, 1)), D_ped=np.zeros((2, 1)),
        D_peu=np.zeros((2, 1)),
        C_py=[[1.0, 0.0]], D_pyw=[[0.0]], D_pyd=[[0.0]],
    )


def flexrod_env(cfg: FlexrodCfg = FlexrodCfg()):
    """Returns (environment over the flexible model, rigid design plant).

    The disturbance enters alongside the control input, matching the rigid
    design model's channel."""
    A_f, B_f, C_f = flexrod_matrices(cfg)

    def dynamics(x, u, d):
        return A_f @ x + (B_f * (u[0] + d[0])).ravel()

    env = Environment(
        name="flexrod", n_x=4, n_u=1, n_y=1, n_d=1, n_e=4,
        dt=cfg.dt, horizon=cfg.horizon, u_min=-cfg.u_sat, u_max=cfg.u_sat,
        dynamics=dynamics,
        measure=lambda x: C_f @ x,
        reward=lambda x, u: float(np.exp(-x @ x) + np.exp(-u[0] ** 2)),
        performance=lambda x, u, d: x,
        sample_init=lambda rng: np.array([
            rng.uniform(-cfg.init_base, cfg.init_base),
            rng.uniform(-cfg.init_tip, cfg.init_tip),
            rng.uniform(-cfg.init_base_rate, cfg.init_base_rate),
            rng.uniform(-cfg.init_tip_rate, cfg.init_tip_rate)]),
        terminated=lambda x: False,
        design_plant=flexrod_rigid_plant(cfg),
        design_multiplier=cfg.multiplier_scale * np.array(
            [[cfg.delta_gain ** 2, 0.0], [0.0, -1.0]]),
    )
    return env, env.design_plant


# ---------------------------------------------------------------------------
# Gain estimation and frequency-domain checks
# ---------------------------------------------------------------------------

def random_l2_bursts(rng, count: int, steps: int, n_d: int, dt: float):
    """Finite-energy test signals: windowed sums of random sinusoids."""
    t = np.arange(steps) * dt
    T = steps * dt
    window = np.sin(np.pi * np.clip(t / T, 0.0, 1.0)) ** 2
    out = []
    for _ in range(count):
        sig = np.zeros((steps, n_d))
        for j in range(n_d):
            for _ in range(4):
                amp = rng.uniform(0.2, 1.0)
                freq = rng.uniform(0.05, 0.5 / dt / 20.0)
                phase = rng.uniform(0, 2 * np.pi)
                sig[:, j] += amp * np.sin(2 * np.pi * freq * t + phase)
            sig[:, j] *= window
        out.append(sig)
    return out


def empirical_l2_gain(sys: UncertainLtiSystem, d_signals, dt: float,
                      delta: FilterRealization | None = None) -> float:
    """max over signals of sqrt(int ||e||^2 / int ||d||^2), zero initial state.

    The uncertainty channel is closed with the LTI block `delta` (w = 0 when
    omitted). Energies use trapezoidal quadrature on the sampling grid.
    """
    A, B, C, D = connect_delta(sys, delta)
    worst = 0.0
    any_energy = False
    for d_sig in d_signals:
        d_sig = np.asarray(d_sig, dtype=float).reshape(-1, sys.n_d)
        e_d = energy(d_sig, dt)
        if e_d <= 0.0:
            continue
        any_energy = True
        xs = simulate_lti_zoh(A, B, np.zeros(A.shape[0]), d_sig, dt)
        es = xs[:-1] @ C.T + d_sig @ D.T
        worst = max(worst, np.sqrt(energy(es, dt) / e_d))
    if not any_energy:
        raise ZeroInputEnergy("all disturbance signals have zero energy")
    return float(worst)


def bode_bound_check(rigid_ss, flexible_ss, gain: float, w_grid) -> bool:
    """True iff |G_f(jw) - G_r(jw)| <= gain / w on every grid point."""
    w_grid = np.asarray(w_grid, dtype=float)
    if np.any(w_grid <= 0):
        raise ValueError("frequency grid must be positive")
    for w in w_grid:
        dev = np.abs(freq_response(flexible_ss, w) - freq_response(rigid_ss, w))
        if np.max(dev) > gain / w:
            return False
    return True
