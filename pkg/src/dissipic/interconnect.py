"""Closed-loop assembly of plant and RINN controller, plus an independent
elimination oracle and the affine map from controller parameters to the
closed-loop matrices."""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch
from .matrix_core import mm
from .systems import RinnController, UncertainLtiPlant, UncertainLtiSystem

__all__ = ["close_loop", "close_loop_oracle", "closed_loop_affine_map", "ClosedLoopAffineMap"]

CL_NAMES = ("A", "B_w", "B_d", "C_v", "D_vw", "D_vd", "C_e", "D_ew", "D_ed")


def _check_dims(p: UncertainLtiPlant, n_y: int, n_u: int):
    if n_y != p.n_y or n_u != p.n_u:
        raise DimensionMismatch(
            f"controller io ({n_y} meas, {n_u} act) does not match plant ({p.n_y}, {p.n_u})")


def close_loop_blocks(p: UncertainLtiPlant, kb: dict, n_k: int, n_phi: int) -> dict:
    """Closed-loop matrices from plant data and controller blocks.

    `kb` maps block names (A_k, ..., D_kuy) to numpy arrays or cvxpy
    expressions; the result is affine in those blocks. State stacking is
    (x_p, x_k); channel stacking is plant-first: v = (v_p, v_k),
    w = (w_p, w_k).
    """
    n_p, n_v, n_w = p.n_p, p.n_v, p.n_w
    n_d, n_e, n_u, n_y = p.n_d, p.n_e, p.n_u, p.n_y
    A_k, B_kw, B_ky = kb["A_k"], kb["B_kw"], kb["B_ky"]
    C_kv, D_kvw, D_kvy = kb["C_kv"], kb["D_kvw"], kb["D_kvy"]
    C_ku, D_kuw, D_kuy = kb["C_ku"], kb["D_kuw"], kb["D_kuy"]

    def stack(rows):
        if all(isinstance(b, np.ndarray) for row in rows for b in row):
            return np.block(rows)
        import cvxpy as cp

        return cp.bmat(rows)

    def hcat(*blocks):
        blocks = [b for b in blocks if 0 not in b.shape]
        if not blocks:
            return None
        return blocks[0] if len(blocks) == 1 else stack([list(blocks)])

    def vcat(*rows):
        rows = [r for r in rows if r is not None and 0 not in r.shape]
        if not rows:
            return None
        return rows[0] if len(rows) == 1 else stack([[r] for r in rows])

    def fill(expr, rows, cols):
        return np.zeros((rows, cols)) if expr is None else expr

    A = fill(vcat(hcat(p.A_p + mm((n_p, n_p), p.B_pu, D_kuy, p.C_py), mm((n_p, n_k), p.B_pu, C_ku)),
                  hcat(mm((n_k, n_p), B_ky, p.C_py), A_k if n_k else np.zeros((0, 0)))),
             n_p + n_k, n_p + n_k)
    B_w = fill(vcat(hcat(p.B_pw + mm((n_p, n_w), p.B_pu, D_kuy, p.D_pyw), mm((n_p, n_phi), p.B_pu, D_kuw)),
                    hcat(mm((n_k, n_w), B_ky, p.D_pyw), B_kw)),
               n_p + n_k, n_w + n_phi)
    B_d = fill(vcat(p.B_pd + mm((n_p, n_d), p.B_pu, D_kuy, p.D_pyd),
                    mm((n_k, n_d), B_ky, p.D_pyd)),
               n_p + n_k, n_d)
    C_v = fill(vcat(hcat(p.C_pv + mm((n_v, n_p), p.D_pvu, D_kuy, p.C_py), mm((n_v, n_k), p.D_pvu, C_ku)),
                    hcat(mm((n_phi, n_p), D_kvy, p.C_py), C_kv)),
               n_v + n_phi, n_p + n_k)
    D_vw = fill(vcat(hcat(p.D_pvw + mm((n_v, n_w), p.D_pvu, D_kuy, p.D_pyw), mm((n_v, n_phi), p.D_pvu, D_kuw)),
                     hcat(mm((n_phi, n_w), D_kvy, p.D_pyw), D_kvw)),
                n_v + n_phi, n_w + n_phi)
    D_vd = fill(vcat(p.D_pvd + mm((n_v, n_d), p.D_pvu, D_kuy, p.D_pyd),
                     mm((n_phi, n_d), D_kvy, p.D_pyd)),
                n_v + n_phi, n_d)
    C_e = fill(hcat(p.C_pe + mm((n_e, n_p), p.D_peu, D_kuy, p.C_py), mm((n_e, n_k), p.D_peu, C_ku)),
               n_e, n_p + n_k)
    D_ew = fill(hcat(p.D_pew + mm((n_e, n_w), p.D_peu, D_kuy, p.D_pyw), mm((n_e, n_phi), p.D_peu, D_kuw)),
                n_e, n_w + n_phi)
    D_ed = p.D_ped + mm((n_e, n_d), p.D_peu, D_kuy, p.D_pyd)
    return dict(zip(CL_NAMES, (A, B_w, B_d, C_v, D_vw, D_vd, C_e, D_ew, D_ed)))


def close_loop(p: UncertainLtiPlant, k: RinnController) -> UncertainLtiSystem:
    """Close the loop; the result stacks states (x_p, x_k) and uncertainty
    channels plant-first."""
    _check_dims(p, k.n_y, k.n_u)
    blocks = close_loop_blocks(p, k.blocks(), k.n_k, k.n_phi)
    labels = ("x_p",) * p.n_p + ("x_k",) * k.n_k
    return UncertainLtiSystem(state_labels=labels, **blocks)


def close_loop_oracle(p: UncertainLtiPlant, k: RinnController) -> UncertainLtiSystem:
    """Interconnection by numerical elimination of (u, y), one basis input
    at a time; validates the closed-form assembly."""
    _check_dims(p, k.n_y, k.n_u)
    n_p, n_k, n_w, n_phi, n_d = p.n_p, k.n_k, p.n_w, k.n_phi, p.n_d
    n_v, n_e, n_u, n_y = p.n_v, p.n_e, p.n_u, p.n_y
    n_in = n_p + n_k + n_w + n_phi + n_d
    n_out = (n_p + n_k) + (n_v + n_phi) + n_e
    cols = np.zeros((n_out, n_in))
    # u depends on y through D_kuy; y has no u feedthrough (D_pyu = 0)
    lin = np.block([[np.eye(n_u), -k.D_kuy], [np.zeros((n_y, n_u)), np.eye(n_y)]])
    for j in range(n_in):
        z = np.zeros(n_in)
        z[j] = 1.0
        x_p, x_k = z[:n_p], z[n_p:n_p + n_k]
        w_p = z[n_p + n_k:n_p + n_k + n_w]
        w_k = z[n_p + n_k + n_w:n_p + n_k + n_w + n_phi]
        d = z[n_p + n_k + n_w + n_phi:]
        rhs = np.concatenate([k.C_ku @ x_k + k.D_kuw @ w_k,
                              p.C_py @ x_p + p.D_pyw @ w_p + p.D_pyd @ d])
        sol = np.linalg.solve(lin, rhs)
        u, y = sol[:n_u], sol[n_u:]
        cols[:, j] = np.concatenate([
            p.A_p @ x_p + p.B_pw @ w_p + p.B_pd @ d + p.B_pu @ u,
            k.A_k @ x_k + k.B_kw @ w_k + k.B_ky @ y,
            p.C_pv @ x_p + p.D_pvw @ w_p + p.D_pvd @ d + p.D_pvu @ u,
            k.C_kv @ x_k + k.D_kvw @ w_k + k.D_kvy @ y,
            p.C_pe @ x_p + p.D_pew @ w_p + p.D_ped @ d + p.D_peu @ u,
        ])
    nx, nv = n_p + n_k, n_v + n_phi
    r1, r2 = nx, nx + nv
    c1, c2 = nx, nx + n_w + n_phi
    return UncertainLtiSystem(
        A=cols[:r1, :c1], B_w=cols[:r1, c1:c2], B_d=cols[:r1, c2:],
        C_v=cols[r1:r2, :c1], D_vw=cols[r1:r2, c1:c2], D_vd=cols[r1:r2, c2:],
        C_e=cols[r2:, :c1], D_ew=cols[r2:, c1:c2], D_ed=cols[r2:, c2:],
    )


class ClosedLoopAffineMap:
    """Affine map theta -> closed-loop matrices, as constant plus one
    coefficient tensor per scalar controller parameter."""

    def __init__(self, plant: UncertainLtiPlant, n_k: int, n_phi: int):
        self.plant = plant
        self.n_k = n_k
        self.n_phi = n_phi
        self.template = RinnController.zeros(n_k, n_phi, plant.n_y, plant.n_u)
        zero = close_loop_blocks(plant, self.template.blocks(), n_k, n_phi)
        self.constant = {name: zero[name] for name in CL_NAMES}
        self.n_params = self.template.flatten().size
        self.coeffs = {name: np.zeros((self.n_params,) + zero[name].shape) for name in CL_NAMES}
        for i in range(self.n_params):
            basis = np.zeros(self.n_params)
            basis[i] = 1.0
            kb = self.template.unflatten(basis).blocks()
            blocks = close_loop_blocks(plant, kb, n_k, n_phi)
            for name in CL_NAMES:
                self.coeffs[name][i] = blocks[name] - self.constant[name]

    def evaluate(self, k: RinnController) -> dict:
        vec = k.flatten()
        return {name: self.constant[name] + np.tensordot(vec, self.coeffs[name], axes=1)
                for name in CL_NAMES}


def closed_loop_affine_map(p: UncertainLtiPlant, n_k: int, n_phi: int) -> ClosedLoopAffineMap:
    return ClosedLoopAffineMap(p, n_k, n_phi)
