"""Dissipativity certification: assemble and check the storage-function
LMI for an uncertain LTI system (closed loop or open), with the dynamic-IQC
pipeline applied automatically when needed, plus runtime trajectory checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .iqc import IqcSpec
from .matrix_core import mm, require_symmetric, spectral_norm, stack_blocks, sym
from .sdp import SdpProblem, frob_distance, solve_sdp
from .systems import StorageCertificate, SupplyRate, UncertainLtiSystem

__all__ = [
    "VerifyOpts",
    "storage_lmi_lhs",
    "schur_form_lhs",
    "verify",
    "storage_lmi_residual",
    "trajectory_dissipation_residual",
]


@dataclass(frozen=True)
class VerifyOpts:
    """Options for `verify`.

    strict requires P above a positive floor; free_lambda makes the plant
    multiplier scaling a decision scalar (otherwise it is fixed to 1);
    condition re-solves for a small-norm certificate at half the best
    margin; auto_extend applies the filter extension for dynamic IQCs.
    """

    strict: bool = True
    eps: float = 1e-6
    margin_cap: float = 1e-2
    p_cap: float = 1e6
    lam_cap: float = 1e6
    free_lambda: bool = True
    auto_extend: bool = True
    wellposed: bool = True
    feas_tol: float = 1e-7
    condition: bool = True


def storage_lmi_lhs(sys: UncertainLtiSystem, M, X: SupplyRate, P, lam: float = 1.0):
    """Left-hand side of the storage LMI for a static multiplier M.

    Accepts numpy arrays or cvxpy expressions for M and P; the result is
    affine in (P, M) jointly when the system matrices are numeric.
    """
    n, nw, nd = sys.n, sys.n_w, sys.n_d
    if isinstance(M, np.ndarray):
        if M.shape != (sys.n_v + nw, sys.n_v + nw):
            raise DimensionMismatch("multiplier must cover the stacked (v, w) channel")
        M = require_symmetric(M)
    if isinstance(P, np.ndarray):
        P = require_symmetric(P)
    z = np.zeros
    pbw = mm((n, nw), P, sys.B_w)
    pbd = mm((n, nd), P, sys.B_d)
    F1 = stack_blocks(
        [n, nw, nd],
        {(0, 0): sym(P @ sys.A),
         (0, 1): pbw, (1, 0): pbw.T,
         (0, 2): pbd, (2, 0): pbd.T},
        "numpy" if isinstance(P, np.ndarray) else "cvxpy")
    Z1 = np.block([[sys.C_v, sys.D_vw, sys.D_vd],
                   [z((nw, n)), np.eye(nw), z((nw, nd))]])
    Z2 = np.block([[z((nd, n)), z((nd, nw)), np.eye(nd)],
                   [sys.C_e, sys.D_ew, sys.D_ed]])
    term_m = lam * (Z1.T @ M @ Z1) if Z1.size else 0.0
    term_x = Z2.T @ X.matrix() @ Z2 if Z2.size else 0.0
    return F1 + term_m - term_x


def schur_form_lhs(blocks: dict, P, M_vw, M_ww, X_dd, X_de, L_Delta, L_X,
                   backend: str = "numpy"):
    """Schur-complement form of the storage LMI: the quadratic multiplier
    and supply terms are moved into an off-diagonal factor block, so the
    result is affine in the closed-loop matrices for fixed P and factors.

    `blocks` holds the nine closed-loop matrices (numpy or cvxpy).
    """
    A, B_w, B_d = blocks["A"], blocks["B_w"], blocks["B_d"]
    C_v, D_vw, D_vd = blocks["C_v"], blocks["D_vw"], blocks["D_vd"]
    C_e, D_ew, D_ed = blocks["C_e"], blocks["D_ew"], blocks["D_ed"]
    n, nw, nd = A.shape[0], B_w.shape[1], B_d.shape[1]
    nz1, nz2 = L_Delta.shape[0], L_X.shape[0]
    T = lambda e: e.T
    cells = {
        (0, 0): sym(P @ A),
        (0, 1): mm((n, nw), P, B_w) + T(mm((nw, n), M_vw.T, C_v)),
        (0, 2): mm((n, nd), P, B_d) - T(mm((nd, n), X_de, C_e)),
        (1, 1): sym(mm((nw, nw), M_vw.T, D_vw)) + (M_ww if nw else np.zeros((0, 0))),
        (1, 2): mm((nw, nd), M_vw.T, D_vd) - T(mm((nd, nw), X_de, D_ew)),
        (2, 2): (-X_dd if nd else np.zeros((0, 0))) - sym(mm((nd, nd), X_de, D_ed)),
        (0, 3): T(mm((nz1, n), L_Delta, C_v)),
        (1, 3): T(mm((nz1, nw), L_Delta, D_vw)),
        (2, 3): T(mm((nz1, nd), L_Delta, D_vd)),
        (0, 4): T(mm((nz2, n), L_X, C_e)),
        (1, 4): T(mm((nz2, nw), L_X, D_ew)),
        (2, 4): T(mm((nz2, nd), L_X, D_ed)),
        (3, 3): -np.eye(nz1),
        (4, 4): -np.eye(nz2),
    }
    for (i, j) in [key for key in cells if key[1] > key[0]]:
        cells[(j, i)] = T(cells[(i, j)])
    return stack_blocks([n, nw, nd, nz1, nz2], cells, backend)


def _split_channels(sys: UncertainLtiSystem, iqc: IqcSpec | None, n_ctrl: int):
    n_vp = sys.n_v - n_ctrl
    n_wp = sys.n_w - n_ctrl
    if n_vp < 0 or n_wp < 0:
        raise DimensionMismatch("more controller channels than uncertainty channels")
    if iqc is None:
        if n_vp or n_wp:
            raise DimensionMismatch("plant uncertainty present but no IQC given")
    elif iqc.kind != "dynamic" and (iqc.n_v != n_vp or iqc.n_w != n_wp):
        raise DimensionMismatch("IQC channel widths do not match the system")
    return n_vp, n_wp


def verify(sys: UncertainLtiSystem, iqc: IqcSpec | None = None, n_ctrl: int = 0,
           X: SupplyRate | None = None, opts: VerifyOpts = VerifyOpts()) -> StorageCertificate:
    """Search for a storage certificate (P, Lambda, lambda_p).

    The last `n_ctrl` uncertainty channels are controller sector channels
    scaled by a diagonal decision Lambda; the leading channels are covered
    by `iqc` scaled by lambda_p. Raises Infeasible when no certificate
    exists; the result's feasibility_residual is the numeric worst
    eigenvalue of the assembled LMI.
    """
    if X is None:
        X = SupplyRate.stability(sys.n_d, sys.n_e)
    if iqc is not None and iqc.kind == "dynamic":
        if not opts.auto_extend:
            raise ValueError("dynamic IQC requires extension (enable auto_extend)")
        from .iqc_transform import extend, transform

        if n_ctrl:
            raise DimensionMismatch("extend the plant before closing the loop "
                                    "when using dynamic IQCs with a controller")
        ext = transform(extend(sys, iqc), iqc)
        static = IqcSpec.static(iqc.M, iqc.Psi1.n_out)
        return verify(ext, static, 0, X, opts)

    n_vp, n_wp = _split_channels(sys, iqc, n_ctrl)
    n = sys.n
    stability_like = spectral_norm(X.matrix()) == 0.0

    def build(maximize_margin, margin_floor=None):
        prob = SdpProblem()
        P = prob.matrix_var("P", n, n, symmetric=True)
        scale = max(1.0, spectral_norm(sys.A))
        # with supply 0 and every multiplier scaling free, the program is
        # homogeneous in (P, Lambda, lambda_p) and the strict floor can be
        # normalized to I; this turns weak infeasibility into strong
        # infeasibility for the solver
        homogeneous = stability_like and (opts.free_lambda or n_vp + n_wp == 0)
        p_floor = 1.0 if (homogeneous and opts.strict) \
            else (opts.eps * scale if opts.strict else 0.0)
        if p_floor:
            prob.add_psd(P - p_floor * np.eye(n))
        else:
            prob.add_psd(P)
        prob.add_psd(opts.p_cap * np.eye(n) - P)
        lam_expr = 1.0
        if iqc is not None and n_vp + n_wp > 0:
            if opts.free_lambda:
                lam_expr = prob.scalar_var("lambda_p", nonneg=True)
                prob.add(lam_expr >= opts.eps)
                prob.add(lam_expr <= opts.lam_cap)
        Lam = None
        if n_ctrl:
            Lam = prob.diag_var("Lambda", n_ctrl)
            prob.add_psd(opts.lam_cap * np.eye(n_ctrl) - Lam)
        # combined multiplier, affine in (lambda_p, Lambda)
        z = np.zeros
        if iqc is not None and n_vp + n_wp:
            Mp = iqc.M
            Mp_vv, Mp_vw, Mp_ww = Mp[:n_vp, :n_vp], Mp[:n_vp, n_vp:], Mp[n_vp:, n_vp:]
        else:
            Mp_vv, Mp_vw, Mp_ww = z((0, 0)), z((0, 0)), z((0, 0))
        nv, nw = sys.n_v, sys.n_w
        Mfull_cells = {}
        # layout over (v_p, v_k, w_p, w_k)
        sizes = [n_vp, n_ctrl, n_wp, n_ctrl]
        if n_vp:
            Mfull_cells[(0, 0)] = lam_expr * Mp_vv
            Mfull_cells[(0, 2)] = lam_expr * Mp_vw
            Mfull_cells[(2, 2)] = lam_expr * Mp_ww
            Mfull_cells[(2, 0)] = lam_expr * Mp_vw.T
        if n_ctrl:
            Mfull_cells[(1, 3)] = Lam
            Mfull_cells[(3, 1)] = Lam
            Mfull_cells[(3, 3)] = -2.0 * Lam
        M_expr = stack_blocks(sizes, Mfull_cells, "cvxpy") if (nv + nw) else z((0, 0))
        lhs = storage_lmi_lhs(sys, M_expr, X, P)
        dim = n + nw + sys.n_d
        if maximize_margin:
            t = prob.scalar_var("margin", nonneg=True)
            prob.add(t <= opts.margin_cap * scale)
            prob.add_nsd(lhs + t * np.eye(dim))
            prob.maximize(t)
        else:
            prob.add_nsd(lhs + margin_floor * np.eye(dim))
            terms = [(P, np.zeros((n, n)))]
            if Lam is not None:
                terms.append((Lam, np.zeros((n_ctrl, n_ctrl))))
            prob.minimize(frob_distance(terms))
        # well-posedness of the controller implicit layer
        if n_ctrl and opts.wellposed:
            D_kvw = sys.D_vw[n_vp:, n_wp:]
            wp = Lam @ D_kvw + D_kvw.T @ Lam - 2.0 * Lam
            prob.add_nsd(wp + opts.eps * np.eye(n_ctrl))
        return prob

    prob = build(maximize_margin=True)
    sol = solve_sdp(prob, feas_tol=opts.feas_tol)
    margin = sol.values.get("margin")
    margin = float(margin) if margin is not None else 0.0
    if opts.condition and margin > 0:
        try:
            prob2 = build(maximize_margin=False, margin_floor=0.5 * margin)
            sol = solve_sdp(prob2, feas_tol=opts.feas_tol)
        except Exception:  # keep the margin-optimal certificate
            pass
    P = sol["P"]
    Lam = sol.values.get("Lambda")
    if Lam is None:
        Lam = np.zeros((n_ctrl, n_ctrl))
    lam_p = sol.values.get("lambda_p")
    lam_p = float(lam_p) if lam_p is not None else 1.0
    # numeric residual of the assembled LMI at the returned certificate
    M_num = _combined_numeric(iqc, lam_p, Lam, n_vp, n_wp, n_ctrl)
    res = storage_lmi_residual(sys, M_num, X, P)
    return StorageCertificate(P, Lam, lam_p, res)


def _combined_numeric(iqc, lam_p, Lam, n_vp, n_wp, n_ctrl):
    z = np.zeros
    if iqc is not None and n_vp + n_wp:
        Mp = lam_p * iqc.M
        Mp_vv, Mp_vw, Mp_ww = Mp[:n_vp, :n_vp], Mp[:n_vp, n_vp:], Mp[n_vp:, n_vp:]
    else:
        Mp_vv = z((n_vp, n_vp)); Mp_vw = z((n_vp, n_wp)); Mp_ww = z((n_wp, n_wp))
    return np.block([
        [Mp_vv, z((n_vp, n_ctrl)), Mp_vw, z((n_vp, n_ctrl))],
        [z((n_ctrl, n_vp)), z((n_ctrl, n_ctrl)), z((n_ctrl, n_wp)), Lam],
        [Mp_vw.T, z((n_wp, n_ctrl)), Mp_ww, z((n_wp, n_ctrl))],
        [z((n_ctrl, n_vp)), Lam, z((n_ctrl, n_wp)), -2.0 * Lam],
    ])


def storage_lmi_residual(sys: UncertainLtiSystem, M, X: SupplyRate, P, lam: float = 1.0) -> float:
    """Worst eigenvalue of the assembled storage LMI (<= 0 means feasible)."""
    lhs = storage_lmi_lhs(sys, M, X, P, lam)
    if lhs.size == 0:
        return 0.0
    return float(np.max(np.linalg.eigvalsh(0.5 * (lhs + lhs.T))))


def trajectory_dissipation_residual(cert: StorageCertificate, X: SupplyRate, traj) -> float:
    """S(x(T)) - S(x(0)) - int s(d, e) dt on a sampled trajectory.

    `traj` is a simulate.Trajectory or a tuple (x, d, e, dt) on a uniform
    grid; a valid certificate keeps this below the quadrature error.
    """
    if hasattr(traj, "x"):
        x, d, e, dt = traj.x, traj.d, traj.e, float(traj.t[1] - traj.t[0])
    else:
        x, d, e, dt = traj
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float).reshape(x.shape[0], -1)
    e = np.asarray(e, dtype=float).reshape(x.shape[0], -1)
    supply = np.array([X.evaluate(d[i], e[i]) for i in range(x.shape[0])])
    integral = float(np.trapezoid(supply, dx=dt))
    return cert.storage(x[-1]) - cert.storage(x[0]) - integral
