"""Convex controller synthesis.

The storage LMI for the closed loop is bilinear in the controller and the
certificate. A congruence transformation with Y = [[R, I], [V^T, 0]] and a
change of variables theta_hat = {S, R, N_A, N_B, N_C, D_kuw, Dhat_kvy,
Dhat_kvw, Lambda} make it affine; this module assembles that LMI, recovers
controllers from theta_hat, and implements the two projection operators
used by the training loop, plus LTI initialization.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    IllConditionedUV,
    Infeasible,
    InfeasibleConstraintSet,
    InfeasibleForCertificate,
    MvvNotPsd,
    NotPsd,
    SingularIminusRS,
    SingularPartition,
)
from .certify import schur_form_lhs
from .interconnect import close_loop_blocks
from .iqc import combine_multipliers
from .matrix_core import factor_gram, mm, near_singular, require_symmetric, spectral_norm, stack_blocks, sym
from .sdp import SdpProblem, frob_distance, solve_sdp
from .systems import RinnController, SupplyRate, UncertainLtiPlant

__all__ = [
    "ThetaHat",
    "SynthesisProblem",
    "ProjectionResult",
    "synthesis_lmi_lhs",
    "construct_theta_hat",
    "reconstruct_theta",
    "theta_hat_project",
    "theta_project",
    "init_lti",
]

_HAT_BLOCKS = ("S", "R", "N_A", "N_B", "N_C", "D_kuw", "Dhat_kvy", "Dhat_kvw", "Lambda")
_LTI_ZERO_BLOCKS = ("N_B", "N_C", "D_kuw", "Dhat_kvy", "Dhat_kvw")


@dataclass(frozen=True)
class ThetaHat:
    """Convexified synthesis variables; Lambda is diagonal."""

    S: np.ndarray
    R: np.ndarray
    N_A: np.ndarray
    N_B: np.ndarray
    N_C: np.ndarray
    D_kuw: np.ndarray
    Dhat_kvy: np.ndarray
    Dhat_kvw: np.ndarray
    Lambda: np.ndarray

    def __post_init__(self):
        for name in _HAT_BLOCKS:
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.S.shape[0]
        if self.R.shape != (n, n) or self.N_A.shape[1] < n or self.N_A.shape[0] < n:
            raise DimensionMismatch("theta_hat blocks are not conformal")

    @property
    def n_p(self): return self.S.shape[0]
    @property
    def n_phi(self): return self.Lambda.shape[0]
    @property
    def n_u(self): return self.N_A.shape[0] - self.n_p
    @property
    def n_y(self): return self.N_A.shape[1] - self.n_p

    def blocks(self) -> dict:
        return {name: getattr(self, name) for name in _HAT_BLOCKS}

    def frobenius_distance(self, other: "ThetaHat") -> float:
        return float(np.sqrt(sum(
            np.sum((getattr(self, n) - getattr(other, n)) ** 2) for n in _HAT_BLOCKS)))

    def to_json_dict(self) -> dict:
        out = {name: np.asarray(getattr(self, name)).tolist() for name in _HAT_BLOCKS}
        out["dims"] = {"n_p": self.n_p, "n_phi": self.n_phi,
                       "n_u": self.n_u, "n_y": self.n_y}
        return out

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ThetaHat":
        d = doc["dims"]
        n_p, n_phi, n_u, n_y = d["n_p"], d["n_phi"], d["n_u"], d["n_y"]
        shapes = {"S": (n_p, n_p), "R": (n_p, n_p), "N_A": (n_p + n_u, n_p + n_y),
                  "N_B": (n_p, n_phi), "N_C": (n_phi, n_p), "D_kuw": (n_u, n_phi),
                  "Dhat_kvy": (n_phi, n_y), "Dhat_kvw": (n_phi, n_phi),
                  "Lambda": (n_phi, n_phi)}
        kw = {name: np.asarray(doc[name], dtype=float).reshape(shapes[name])
              for name in _HAT_BLOCKS}
        return cls(**kw)


@dataclass(frozen=True)
class SynthesisProblem:
    """Plant in static-IQC form plus the data defining the synthesis LMI.

    The controller state dimension is fixed to the plant state dimension.
    `free_m_ww` / `free_x_dd` optionally release the corresponding
    multiplier blocks as decision variables during projections.
    """

    plant: UncertainLtiPlant
    M_dp: np.ndarray
    X: SupplyRate
    n_phi: int
    t_rs: float = 1.0
    eps: float = 1e-6
    eps_lambda: float = 1e-6
    eps_rs_cap: float = 10.0
    free_m_ww: bool = False
    free_x_dd: bool = False
    L_dp: np.ndarray = field(init=False)
    L_x: np.ndarray = field(init=False)

    def __post_init__(self):
        p = self.plant
        M = require_symmetric(np.asarray(self.M_dp, dtype=float))
        if M.shape != (p.n_v + p.n_w, p.n_v + p.n_w):
            raise DimensionMismatch("plant multiplier must cover (v_p, w_p)")
        object.__setattr__(self, "M_dp", M)
        if self.X.n_d != p.n_d or self.X.n_e != p.n_e:
            raise DimensionMismatch("supply rate does not match plant (d, e)")
        try:
            L_dp = factor_gram(M[:p.n_v, :p.n_v])
        except NotPsd as exc:
            raise MvvNotPsd(str(exc)) from exc
        try:
            L_x = factor_gram(-self.X.X_ee)
        except NotPsd as exc:
            raise NotPsd(f"X_ee must be NSD for synthesis: {exc}") from exc
        object.__setattr__(self, "L_dp", L_dp.reshape(-1, p.n_v))
        object.__setattr__(self, "L_x", L_x.reshape(-1, p.n_e))

    @property
    def n_p(self): return self.plant.n_p

    @property
    def M_dp_vv(self): return self.M_dp[:self.plant.n_v, :self.plant.n_v]
    @property
    def M_dp_vw(self): return self.M_dp[:self.plant.n_v, self.plant.n_v:]
    @property
    def M_dp_ww(self): return self.M_dp[self.plant.n_v:, self.plant.n_v:]

    def data_scale(self) -> float:
        return max(1.0, spectral_norm(self.plant.A_p), spectral_norm(self.M_dp),
                   spectral_norm(self.X.matrix()))

    def zero_theta_hat_seed(self) -> ThetaHat:
        """theta_hat corresponding to theta = 0, P = I and Lambda at its
        floor; the P = I partition is degenerate, so the blocks are written
        out directly instead of going through construct_theta_hat."""
        p, n_phi = self.plant, self.n_phi
        n, nu, ny = p.n_p, p.n_u, p.n_y
        return ThetaHat(
            S=np.eye(n), R=np.eye(n),
            N_A=np.block([[p.A_p, np.zeros((n, ny))], [np.zeros((nu, n + ny))]]),
            N_B=np.zeros((n, n_phi)), N_C=np.zeros((n_phi, n)),
            D_kuw=np.zeros((nu, n_phi)), Dhat_kvy=np.zeros((n_phi, ny)),
            Dhat_kvw=np.zeros((n_phi, n_phi)),
            Lambda=self.eps_lambda * np.eye(n_phi))


def synthesis_lmi_lhs(prob: SynthesisProblem, th, backend: str = "numpy",
                      m_ww=None, x_dd=None):
    """Left-hand side of the convexified storage LMI, affine in theta_hat.

    `th` maps block names to numpy arrays or cvxpy expressions (a ThetaHat
    works). `m_ww` / `x_dd` override the plant multiplier (w, w) block and
    the supply (d, d) block, e.g. with decision variables.
    """
    p = prob.plant
    if isinstance(th, ThetaHat):
        th = th.blocks()
    n, nu, ny = p.n_p, p.n_u, p.n_y
    nvp, nwp, nd, ne = p.n_v, p.n_w, p.n_d, p.n_e
    n_phi = prob.n_phi
    MT = prob.M_dp_vw.T
    Mww = prob.M_dp_ww if m_ww is None else m_ww
    Xdd = prob.X.X_dd if x_dd is None else x_dd
    Xde = prob.X.X_de
    LDp, LX = prob.L_dp, prob.L_x
    nz1, nz2 = LDp.shape[0], LX.shape[0]

    S, R, NA = th["S"], th["R"], th["N_A"]
    NB, NC = th["N_B"], th["N_C"]
    Dkuw, Dhkvy, Dhkvw, Lam = th["D_kuw"], th["Dhat_kvy"], th["Dhat_kvw"], th["Lambda"]
    NA11, NA12 = NA[:n, :n], NA[:n, n:]
    NA21, NA22 = NA[n:, :n], NA[n:, n:]
    T = lambda e: e.T

    # congruence images of the closed-loop matrices (plant channels first)
    CvY_l = mm((nvp, n), p.C_pv, R) + mm((nvp, n), p.D_pvu, NA21)
    CvY_r = p.C_pv + mm((nvp, n), p.D_pvu, NA22, p.C_py)
    CeY_l = mm((ne, n), p.C_pe, R) + mm((ne, n), p.D_peu, NA21)
    CeY_r = p.C_pe + mm((ne, n), p.D_peu, NA22, p.C_py)
    Dvw_pp = p.D_pvw + mm((nvp, nwp), p.D_pvu, NA22, p.D_pyw)
    Dvw_pk = mm((nvp, n_phi), p.D_pvu, Dkuw)
    Dvd_p = p.D_pvd + mm((nvp, nd), p.D_pvu, NA22, p.D_pyd)
    Dew_p = p.D_pew + mm((ne, nwp), p.D_peu, NA22, p.D_pyw)
    Dew_k = mm((ne, n_phi), p.D_peu, Dkuw)
    Ded = p.D_ped + mm((ne, nd), p.D_peu, NA22, p.D_pyd)

    A_ll = mm((n, n), p.A_p, R) + mm((n, n), p.B_pu, NA21)
    A_lr = p.A_p + mm((n, n), p.B_pu, NA22, p.C_py)
    A_rl = NA11
    A_rr = mm((n, n), S, p.A_p) + mm((n, n), NA12, p.C_py)
    Bw_lp = p.B_pw + mm((n, nwp), p.B_pu, NA22, p.D_pyw)
    Bw_lk = mm((n, n_phi), p.B_pu, Dkuw)
    Bw_rp = mm((n, nwp), S, p.B_pw) + mm((n, nwp), NA12, p.D_pyw)
    Bw_rk = NB
    Bd_l = p.B_pd + mm((n, nd), p.B_pu, NA22, p.D_pyd)
    Bd_r = mm((n, nd), S, p.B_pd) + mm((n, nd), NA12, p.D_pyd)
    McY_lp = mm((nwp, n), MT, CvY_l)
    McY_rp = mm((nwp, n), MT, CvY_r)
    McY_lk = NC
    McY_rk = mm((n_phi, n), Dhkvy, p.C_py)

    Gpp = mm((nwp, nwp), MT, Dvw_pp)

    # channel layout: x_l, x_r, w_p, w_k, d, z1, z2
    sizes = [n, n, nwp, n_phi, nd, nz1, nz2]
    cells = {
        (0, 0): sym(A_ll),
        (0, 1): T(A_rl) + A_lr,
        (1, 1): sym(A_rr),
        (0, 2): Bw_lp + T(McY_lp),
        (1, 2): Bw_rp + T(McY_rp),
        (0, 3): Bw_lk + T(McY_lk),
        (1, 3): Bw_rk + T(McY_rk),
        (0, 4): Bd_l - T(mm((nd, n), Xde, CeY_l)),
        (1, 4): Bd_r - T(mm((nd, n), Xde, CeY_r)),
        (2, 2): sym(Gpp) + (Mww if nwp else np.zeros((0, 0))),
        (2, 3): mm((nwp, n_phi), MT, Dvw_pk) + T(mm((n_phi, nwp), Dhkvy, p.D_pyw)),
        (3, 3): sym(Dhkvw) - 2.0 * Lam if n_phi else np.zeros((0, 0)),
        (2, 4): mm((nwp, nd), MT, Dvd_p) - T(mm((nd, nwp), Xde, Dew_p)),
        (3, 4): mm((n_phi, nd), Dhkvy, p.D_pyd) - T(mm((nd, n_phi), Xde, Dew_k)),
        (4, 4): (-Xdd if nd else np.zeros((0, 0))) - sym(mm((nd, nd), Xde, Ded)),
        (0, 5): T(mm((nz1, n), LDp, CvY_l)),
        (1, 5): T(mm((nz1, n), LDp, CvY_r)),
        (2, 5): T(mm((nz1, nwp), LDp, Dvw_pp)),
        (3, 5): T(mm((nz1, n_phi), LDp, Dvw_pk)),
        (4, 5): T(mm((nz1, nd), LDp, Dvd_p)),
        (0, 6): T(mm((nz2, n), LX, CeY_l)),
        (1, 6): T(mm((nz2, n), LX, CeY_r)),
        (2, 6): T(mm((nz2, nwp), LX, Dew_p)),
        (3, 6): T(mm((nz2, n_phi), LX, Dew_k)),
        (4, 6): T(mm((nz2, nd), LX, Ded)),
        (5, 5): -np.eye(nz1),
        (6, 6): -np.eye(nz2),
    }
    for (i, j) in [key for key in cells if key[1] > key[0]]:
        cells[(j, i)] = T(cells[(i, j)])
    return stack_blocks(sizes, cells, backend)


def _partition_certificate(P: np.ndarray, n: int):
    P = require_symmetric(np.asarray(P, dtype=float))
    if P.shape != (2 * n, 2 * n):
        raise DimensionMismatch("P must have twice the plant state dimension")
    lam_min = float(np.min(np.linalg.eigvalsh(P)))
    if lam_min <= 0:
        raise NotPsd(f"P must be positive definite (lambda_min = {lam_min:.3e})")
    S = P[:n, :n]
    U = P[:n, n:]
    Pinv = np.linalg.inv(P)
    R = 0.5 * (Pinv[:n, :n] + Pinv[:n, :n].T)
    V = Pinv[:n, n:]
    return S, U, R, V


def construct_theta_hat(k: RinnController, P, Lambda, plant: UncertainLtiPlant,
                        cond_limit: float = 1e10) -> ThetaHat:
    """Change of variables from (theta, P, Lambda) to theta_hat.

    Requires n_k = n_p and a partition with I - RS safely invertible (the
    recoverability condition); use SynthesisProblem.zero_theta_hat_seed for
    the degenerate P = I seed.
    """
    n = plant.n_p
    if k.n_k != n:
        raise DimensionMismatch("controller state must match plant state")
    S, U, R, V = _partition_certificate(P, n)
    if near_singular(np.eye(n) - R @ S, cond_limit):
        raise SingularPartition("I - RS is numerically singular")
    Lam = np.asarray(Lambda, dtype=float)
    if Lam.ndim == 1:
        Lam = np.diag(Lam)
    th22 = np.block([[k.A_k, k.B_ky], [k.C_ku, k.D_kuy]])
    left = np.block([[U, S @ plant.B_pu],
                     [np.zeros((plant.n_u, n)), np.eye(plant.n_u)]])
    right = np.block([[V.T, np.zeros((n, plant.n_y))],
                      [plant.C_py @ R, np.eye(plant.n_y)]])
    N_A = np.block([[S @ plant.A_p @ R, np.zeros((n, plant.n_y))],
                    [np.zeros((plant.n_u, n + plant.n_y))]]) + left @ th22 @ right
    N_B = S @ plant.B_pu @ k.D_kuw + U @ k.B_kw
    N_C = Lam @ k.D_kvy @ plant.C_py @ R + Lam @ k.C_kv @ V.T
    return ThetaHat(S=S, R=R, N_A=N_A, N_B=N_B, N_C=N_C, D_kuw=k.D_kuw,
                    Dhat_kvy=Lam @ k.D_kvy, Dhat_kvw=Lam @ k.D_kvw, Lambda=Lam)


def _coupling_factors(S, R, cond_limit_irs: float = 1e10, cond_limit_uv: float = 1e8):
    """Balanced factors V U^T = I - RS via SVD, plus Y and P."""
    n = S.shape[0]
    IRS = np.eye(n) - R @ S
    if near_singular(IRS, cond_limit_irs):
        raise SingularIminusRS("I - RS is numerically singular")
    W, sig, Zt = np.linalg.svd(IRS)
    root = np.sqrt(sig)
    V = W @ np.diag(root)
    U = (np.diag(root) @ Zt).T
    if sig[0] / sig[-1] > cond_limit_uv ** 2:
        raise IllConditionedUV(f"factor conditioning {np.sqrt(sig[0] / sig[-1]):.3e}")
    Y = np.block([[R, np.eye(n)], [V.T, np.zeros((n, n))]])
    P = np.block([[np.eye(n), S], [np.zeros((n, n)), U.T]]) @ np.linalg.inv(Y)
    P = 0.5 * (P + P.T)
    return U, V, Y, P


def reconstruct_theta(th: ThetaHat, plant: UncertainLtiPlant,
                      activation: str = "tanh"):
    """Recover (theta, P, Lambda) from theta_hat.

    The factors (U, V) are pinned by the balanced SVD split, so the result
    is the canonical representative of the controller state basis; P is
    rebuilt from the same factors.
    """
    n, nu, ny, n_phi = plant.n_p, plant.n_u, plant.n_y, th.n_phi
    U, V, Y, P = _coupling_factors(th.S, th.R)
    lam_min = float(np.min(np.linalg.eigvalsh(P)))
    if lam_min <= 0:
        raise SingularPartition(f"reconstructed P is not PD ({lam_min:.3e})")
    Lam = th.Lambda
    if n_phi:
        Lam_inv = np.diag(1.0 / np.diag(Lam))
        D_kvy = Lam_inv @ th.Dhat_kvy
        D_kvw = Lam_inv @ th.Dhat_kvw
        B_kw = np.linalg.solve(U, th.N_B - th.S @ plant.B_pu @ th.D_kuw)
        C_kv = Lam_inv @ np.linalg.solve(V, (th.N_C - th.Dhat_kvy @ plant.C_py @ th.R).T).T
    else:
        D_kvy = np.zeros((0, ny))
        D_kvw = np.zeros((0, 0))
        B_kw = np.zeros((n, 0))
        C_kv = np.zeros((0, n))
    left = np.block([[U, th.S @ plant.B_pu],
                     [np.zeros((nu, n)), np.eye(nu)]])
    right = np.block([[V.T, np.zeros((n, ny))],
                      [plant.C_py @ th.R, np.eye(ny)]])
    core = th.N_A - np.block([[th.S @ plant.A_p @ th.R, np.zeros((n, ny))],
                              [np.zeros((nu, n + ny))]])
    th22 = np.linalg.solve(left, core) @ np.linalg.inv(right)
    k = RinnController(
        A_k=th22[:n, :n], B_kw=B_kw, B_ky=th22[:n, n:],
        C_kv=C_kv, D_kvw=D_kvw, D_kvy=D_kvy,
        C_ku=th22[n:, :n], D_kuw=th.D_kuw, D_kuy=th22[n:, n:],
        activation=activation)
    return k, P, Lam


@dataclass(frozen=True)
class ProjectionResult:
    theta_hat: ThetaHat
    delta_star: float
    eps_rs: float
    m_ww: np.ndarray | None = None
    x_dd: np.ndarray | None = None


def _hat_variables(prob: SynthesisProblem, sdp: SdpProblem, lti: bool):
    p, n_phi = prob.plant, prob.n_phi
    n, nu, ny = p.n_p, p.n_u, p.n_y
    th = {
        "S": sdp.matrix_var("S", n, n, symmetric=True),
        "R": sdp.matrix_var("R", n, n, symmetric=True),
        "N_A": sdp.matrix_var("N_A", n + nu, n + ny),
        "Lambda": sdp.diag_var("Lambda", n_phi) if n_phi else np.zeros((0, 0)),
    }
    if lti:
        for name, shape in (("N_B", (n, n_phi)), ("N_C", (n_phi, n)),
                            ("D_kuw", (nu, n_phi)), ("Dhat_kvy", (n_phi, ny)),
                            ("Dhat_kvw", (n_phi, n_phi))):
            th[name] = np.zeros(shape)
    else:
        th["N_B"] = sdp.matrix_var("N_B", n, n_phi) if n_phi else np.zeros((n, 0))
        th["N_C"] = sdp.matrix_var("N_C", n_phi, n) if n_phi else np.zeros((0, n))
        th["D_kuw"] = sdp.matrix_var("D_kuw", nu, n_phi) if n_phi else np.zeros((nu, 0))
        th["Dhat_kvy"] = sdp.matrix_var("Dhat_kvy", n_phi, ny) if n_phi else np.zeros((0, ny))
        th["Dhat_kvw"] = sdp.matrix_var("Dhat_kvw", n_phi, n_phi) if n_phi else np.zeros((0, 0))
    return th


def _hat_from_solution(prob: SynthesisProblem, th, values) -> ThetaHat:
    out = {}
    for name in _HAT_BLOCKS:
        v = th[name]
        out[name] = values[name] if not isinstance(v, np.ndarray) else v
    if prob.n_phi == 0:
        out["Lambda"] = np.zeros((0, 0))
    return ThetaHat(**out)


def _feasible_set_constraints(prob: SynthesisProblem, sdp: SdpProblem, th,
                              coupling_floor, m_ww=None, x_dd=None):
    import cvxpy as cp

    p, n, n_phi = prob.plant, prob.n_p, prob.n_phi
    scale = prob.data_scale()
    eps = prob.eps * scale
    lhs = synthesis_lmi_lhs(prob, th, backend="cvxpy", m_ww=m_ww, x_dd=x_dd)
    sdp.add_nsd(lhs + eps * np.eye(lhs.shape[0]))
    sdp.add_psd(th["S"] - prob.eps * np.eye(n))
    sdp.add_psd(th["R"] - prob.eps * np.eye(n))
    coupling = cp.bmat([[th["R"], prob.t_rs * np.eye(n)],
                        [prob.t_rs * np.eye(n), th["S"]]])
    sdp.add_psd(coupling - coupling_floor * np.eye(2 * n))
    if n_phi:
        lam_vec = cp.diag(th["Lambda"])
        sdp.add(lam_vec >= prob.eps_lambda)
        wellposed = th["Dhat_kvw"] + th["Dhat_kvw"].T - 2.0 * th["Lambda"]
        if not isinstance(wellposed, np.ndarray):
            sdp.add_nsd(wellposed + prob.eps * np.eye(n_phi))
        # in LTI mode Dhat_kvw = 0 and the constraint is Lambda >= eps/2,
        # already implied by the floor above


def _free_multiplier_vars(prob: SynthesisProblem, sdp: SdpProblem):
    m_ww = x_dd = None
    if prob.free_m_ww and prob.plant.n_w:
        m_ww = sdp.matrix_var("M_ww_free", prob.plant.n_w, prob.plant.n_w, symmetric=True)
    if prob.free_x_dd and prob.plant.n_d:
        x_dd = sdp.matrix_var("X_dd_free", prob.plant.n_d, prob.plant.n_d, symmetric=True)
    return m_ww, x_dd


def theta_hat_project(seed: ThetaHat, prob: SynthesisProblem, beta: float = 1.0,
                      lti: bool = False) -> ProjectionResult:
    """Project theta_hat onto the feasible synthesis set.

    Two stages: minimize the Frobenius distance to `seed` (delta*), then
    re-solve maximizing the coupling margin eps_RS subject to the distance
    staying within beta * delta*. beta >= 1 trades projection optimality
    for reconstruction conditioning.
    """
    if beta < 1.0:
        raise ValueError("backoff factor must be >= 1")
    targets = seed.blocks()

    def distance_expr(th):
        pairs = []
        for name in _HAT_BLOCKS:
            if not isinstance(th[name], np.ndarray):
                pairs.append((th[name], targets[name]))
        return frob_distance(pairs)

    sdp = SdpProblem()
    th = _hat_variables(prob, sdp, lti)
    m_ww, x_dd = _free_multiplier_vars(prob, sdp)
    _feasible_set_constraints(prob, sdp, th, coupling_floor=prob.eps, m_ww=m_ww, x_dd=x_dd)
    dist = distance_expr(th)
    sdp.minimize(dist)
    try:
        sol = solve_sdp(sdp)
    except Infeasible as exc:
        raise InfeasibleConstraintSet(status=exc.status) from exc
    delta_star = float(sol.objective)

    sdp2 = SdpProblem()
    th2 = _hat_variables(prob, sdp2, lti)
    m_ww2, x_dd2 = _free_multiplier_vars(prob, sdp2)
    eps_rs = sdp2.scalar_var("eps_rs", nonneg=True)
    _feasible_set_constraints(prob, sdp2, th2, coupling_floor=eps_rs,
                              m_ww=m_ww2, x_dd=x_dd2)
    sdp2.add(eps_rs <= prob.eps_rs_cap)
    sdp2.add(distance_expr(th2) <= beta * delta_star + 1e-8 * max(1.0, delta_star))
    sdp2.maximize(eps_rs)
    try:
        sol2 = solve_sdp(sdp2)
        hat = _hat_from_solution(prob, th2, sol2.values)
        eps_val = float(sol2["eps_rs"])
        vals = sol2.values
    except Infeasible:
        # numerically boxed in at delta*: keep the stage-1 point and report
        # the coupling margin it actually achieves
        hat = _hat_from_solution(prob, th, sol.values)
        coupling = np.block([[hat.R, prob.t_rs * np.eye(prob.n_p)],
                             [prob.t_rs * np.eye(prob.n_p), hat.S]])
        eps_val = float(np.min(np.linalg.eigvalsh(coupling)))
        vals = sol.values
    return ProjectionResult(
        hat, delta_star, eps_val,
        m_ww=vals.get("M_ww_free"), x_dd=vals.get("X_dd_free"))


def theta_project(target: RinnController, P, Lambda, prob: SynthesisProblem,
                  lti: bool = False, margin_scale: float = 1e-2) -> RinnController:
    """Project a controller onto the set certified by the fixed (P, Lambda).

    With the certificate fixed, the Schur-complement form of the storage
    LMI is affine in theta, so this is a single conic program minimizing
    the Frobenius distance to `target`. The required margin is scaled down
    by `margin_scale`: the congruence from the convexified coordinates
    shrinks the guaranteed margin, so asking for the full one would cut
    off certified controllers.
    """
    import cvxpy as cp

    p, n, n_phi = prob.plant, prob.n_p, prob.n_phi
    P = require_symmetric(np.asarray(P, dtype=float))
    Lam = np.asarray(Lambda, dtype=float)
    if Lam.ndim == 1:
        Lam = np.diag(Lam)
    sdp = SdpProblem()
    nu, ny = p.n_u, p.n_y
    shapes = {"A_k": (n, n), "B_kw": (n, n_phi), "B_ky": (n, ny),
              "C_kv": (n_phi, n), "D_kvw": (n_phi, n_phi), "D_kvy": (n_phi, ny),
              "C_ku": (nu, n), "D_kuw": (nu, n_phi), "D_kuy": (nu, ny)}
    neural = ("B_kw", "C_kv", "D_kvw", "D_kvy", "D_kuw")
    kb = {}
    for name, (r, c) in shapes.items():
        if r * c == 0 or (lti and name in neural):
            kb[name] = np.zeros((r, c))
        else:
            kb[name] = sdp.matrix_var(name, r, c)
    cm = combine_multipliers(prob.M_dp, Lam, n_phi, n_vp=p.n_v)
    blocks = close_loop_blocks(p, kb, n, n_phi)
    lhs = schur_form_lhs(blocks, P, cm.M_vw, cm.M_ww, prob.X.X_dd, prob.X.X_de,
                         cm.L_Delta, prob.L_x, backend="cvxpy")
    eps = margin_scale * prob.eps * prob.data_scale()
    sdp.add_nsd(lhs + eps * np.eye(lhs.shape[0]))
    if n_phi and not lti:
        wellposed = Lam @ kb["D_kvw"] + kb["D_kvw"].T @ Lam - 2.0 * Lam
        sdp.add_nsd(wellposed + margin_scale * prob.eps * np.eye(n_phi))
    pairs = [(kb[name], getattr(target, name)) for name in shapes
             if not isinstance(kb[name], np.ndarray)]
    sdp.minimize(frob_distance(pairs))
    try:
        sol = solve_sdp(sdp)
    except Infeasible as exc:
        raise InfeasibleForCertificate(status=exc.status) from exc
    out = {name: (sol.values[name] if not isinstance(kb[name], np.ndarray)
                  else kb[name]) for name in shapes}
    return RinnController(activation=target.activation, **out)


def init_lti(prob: SynthesisProblem, beta: float = 1.05):
    """LTI initialization: project the theta = 0, P = I seed onto the
    feasible set restricted to LTI controllers, then reconstruct.

    Returns (controller, P, Lambda); the controller's neural blocks are
    identically zero and (P, Lambda) certify it.
    """
    seed = prob.zero_theta_hat_seed()
    res = theta_hat_project(seed, prob, beta=beta, lti=True)
    k, P, Lam = reconstruct_theta(res.theta_hat, prob.plant)
    return k, P, Lam
