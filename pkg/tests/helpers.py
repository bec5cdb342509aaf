"""Shared generators for random plants, controllers and stable systems."""
import numpy as np

from dissipic.systems import RinnController, UncertainLtiPlant, UncertainLtiSystem


def rand_plant(rng, n_p=3, n_v=2, n_w=2, n_d=1, n_e=2, n_u=1, n_y=1, scale=1.0):
    r = lambda a, b: scale * rng.standard_normal((a, b))
    return UncertainLtiPlant(
        A_p=r(n_p, n_p), B_pw=r(n_p, n_w), B_pd=r(n_p, n_d), B_pu=r(n_p, n_u),
        C_pv=r(n_v, n_p), D_pvw=r(n_v, n_w), D_pvd=r(n_v, n_d), D_pvu=r(n_v, n_u),
        C_pe=r(n_e, n_p), D_pew=r(n_e, n_w), D_ped=r(n_e, n_d), D_peu=r(n_e, n_u),
        C_py=r(n_y, n_p), D_pyw=r(n_y, n_w), D_pyd=r(n_y, n_d),
    )


def rand_controller(rng, n_k=2, n_phi=3, n_y=1, n_u=1, scale=1.0, activation="tanh",
                    wellposed=False):
    r = lambda a, b: scale * rng.standard_normal((a, b))
    D_kvw = r(n_phi, n_phi)
    if wellposed and n_phi:
        # shrink until I - 0.5 (D + D^T) is PD with margin (Lambda = I certificate)
        while np.max(np.linalg.eigvalsh(D_kvw + D_kvw.T)) > 1.8:
            D_kvw = 0.8 * D_kvw
    return RinnController(
        A_k=r(n_k, n_k), B_kw=r(n_k, n_phi), B_ky=r(n_k, n_y),
        C_kv=r(n_phi, n_k), D_kvw=D_kvw, D_kvy=r(n_phi, n_y),
        C_ku=r(n_u, n_k), D_kuw=r(n_u, n_phi), D_kuy=r(n_u, n_y),
        activation=activation,
    )


def rand_stable_system(rng, n=3, n_v=0, n_w=0, n_d=1, n_e=1, decay=(0.2, 2.0), scale=0.7):
    """Random internally stable uncertain LTI system with moderate norms."""
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    lam = -rng.uniform(*decay, n)
    A = Q @ np.diag(lam) @ Q.T + 0.1 * scale * rng.standard_normal((n, n))
    while np.max(np.linalg.eigvals(A).real) > -0.05:
        A = 0.5 * (A + Q @ np.diag(lam) @ Q.T)
    r = lambda a, b: scale * rng.standard_normal((a, b))
    return UncertainLtiSystem(
        A=A, B_w=r(n, n_w), B_d=r(n, n_d),
        C_v=r(n_v, n), D_vw=np.zeros((n_v, n_w)), D_vd=r(n_v, n_d),
        C_e=r(n_e, n), D_ew=r(n_e, n_w), D_ed=np.zeros((n_e, n_d)),
    )


def first_order_lag():
    """1/(s+1) as an UncertainLtiSystem with no uncertainty channels."""
    return UncertainLtiSystem(
        A=[[-1.0]], B_w=np.zeros((1, 0)), B_d=[[1.0]],
        C_v=np.zeros((0, 1)), D_vw=np.zeros((0, 0)), D_vd=np.zeros((0, 1)),
        C_e=[[1.0]], D_ew=np.zeros((1, 0)), D_ed=[[0.0]],
    )


def pendulum_problem(n_phi=16, t_rs=1.5):
    from dissipic.simulate import pendulum_env
    from dissipic.synthesize import SynthesisProblem
    from dissipic.systems import SupplyRate

    env = pendulum_env()
    return SynthesisProblem(env.design_plant, env.design_multiplier,
                            SupplyRate.stability(0, 2), n_phi, t_rs=t_rs)


def flexrod_problem(n_phi=16, t_rs=1.0):
    from dissipic.simulate import flexrod_env
    from dissipic.synthesize import SynthesisProblem
    from dissipic.systems import SupplyRate

    env, plant = flexrod_env()
    return SynthesisProblem(plant, env.design_multiplier,
                            SupplyRate.l2_gain(0.99, 1, 2, scale=0.5), n_phi,
                            t_rs=t_rs)


def perturbed_feasible_hat(prob, rng, sigma=0.3, beta=1.05):
    """Feasible theta_hat sampled by projecting noise around the LTI seed."""
    from dissipic.synthesize import ThetaHat, theta_hat_project

    seed = prob.zero_theta_hat_seed()
    blocks = {}
    for name in ("S", "R", "N_A", "N_B", "N_C", "D_kuw", "Dhat_kvy", "Dhat_kvw", "Lambda"):
        base = getattr(seed, name)
        noise = sigma * rng.standard_normal(base.shape)
        if name in ("S", "R"):
            noise = 0.5 * (noise + noise.T)
        if name == "Lambda":
            noise = np.diag(np.abs(np.diag(noise)))
        blocks[name] = base + noise
    return theta_hat_project(ThetaHat(**blocks), prob, beta=beta)
