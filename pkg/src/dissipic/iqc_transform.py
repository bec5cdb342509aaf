"""Dynamic-IQC loop transformation: extend an uncertain LTI system with the
IQC filters, then swap the uncertainty output channel so the transformed
uncertainty satisfies the static multiplier diag(I, -I)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SingularDpsi1, SingularDpsi2
from .matrix_core import near_singular
from .iqc import FilterRealization, IqcSpec
from .simulate import simulate_lti_zoh
from .systems import UncertainLtiSystem

__all__ = [
    "ExtendedSystem",
    "extend",
    "transform",
    "tilde_delta_response",
    "series",
    "invert_filter",
]


def series(first: FilterRealization, second: FilterRealization) -> FilterRealization:
    """Composition second(first(.)) as one realization."""
    if second.n_in != first.n_out:
        raise DimensionMismatch("series dimensions do not match")
    n1, n2 = first.n_states, second.n_states
    A = np.block([[first.A, np.zeros((n1, n2))], [second.B @ first.C, second.A]])
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    D = second.D @ first.D
    return FilterRealization(A, B, C, D)


def invert_filter(f: FilterRealization, cond_limit: float = 1e8) -> FilterRealization:
    """State-space inverse; requires an invertible feedthrough."""
    if f.n_in != f.n_out:
        raise DimensionMismatch("only square filters are invertible")
    if near_singular(f.D, cond_limit):
        raise ValueError("filter feedthrough is numerically singular")
    Dinv = np.linalg.inv(f.D) if f.n_in else f.D
    return FilterRealization(f.A - f.B @ Dinv @ f.C, f.B @ Dinv, -Dinv @ f.C, Dinv)


@dataclass(frozen=True)
class ExtendedSystem:
    """System over the augmented state (x, psi1, psi2), keeping both the
    original uncertainty input v and the filtered output v_tilde."""

    A: np.ndarray
    B_w: np.ndarray
    B_d: np.ndarray
    C_v: np.ndarray       # original v over the extended state: [C_v 0 0]
    D_vw: np.ndarray
    D_vd: np.ndarray
    C_vt: np.ndarray      # filtered output v_tilde
    D_vtw: np.ndarray
    D_vtd: np.ndarray
    C_e: np.ndarray
    D_ew: np.ndarray
    D_ed: np.ndarray
    n_x: int
    n_psi1: int
    n_psi2: int

    @property
    def state_labels(self):
        return ("x",) * self.n_x + ("psi1",) * self.n_psi1 + ("psi2",) * self.n_psi2

    def as_system(self) -> UncertainLtiSystem:
        """Extended system with the original (v, w) uncertainty channel."""
        return UncertainLtiSystem(
            A=self.A, B_w=self.B_w, B_d=self.B_d,
            C_v=self.C_v, D_vw=self.D_vw, D_vd=self.D_vd,
            C_e=self.C_e, D_ew=self.D_ew, D_ed=self.D_ed,
            state_labels=self.state_labels)


def extend(sys: UncertainLtiSystem, iqc: IqcSpec) -> ExtendedSystem:
    """Augment the system with the IQC filter states (filters start at 0).

    Psi1 is driven by v, Psi2 by w; the (x, e) dynamics are untouched, so
    trajectories of the original system are sub-trajectories here.
    """
    if iqc.kind != "dynamic":
        raise ValueError("only dynamic IQCs require extension")
    p1, p2 = iqc.Psi1, iqc.Psi2
    if p1.n_in != sys.n_v or p2.n_in != sys.n_w:
        raise DimensionMismatch("filter widths must match the uncertainty channel")
    n, m1, m2 = sys.n, p1.n_states, p2.n_states
    nw, nd = sys.n_w, sys.n_d
    z = np.zeros
    A = np.block([
        [sys.A, z((n, m1)), z((n, m2))],
        [p1.B @ sys.C_v, p1.A, z((m1, m2))],
        [z((m2, n)), z((m2, m1)), p2.A],
    ])
    B_w = np.vstack([sys.B_w, p1.B @ sys.D_vw, p2.B])
    B_d = np.vstack([sys.B_d, p1.B @ sys.D_vd, z((m2, nd))])
    C_v = np.hstack([sys.C_v, z((sys.n_v, m1)), z((sys.n_v, m2))])
    C_vt = np.hstack([p1.D @ sys.C_v, p1.C, z((p1.n_out, m2))])
    D_vtw = p1.D @ sys.D_vw
    D_vtd = p1.D @ sys.D_vd
    C_e = np.hstack([sys.C_e, z((sys.n_e, m1)), z((sys.n_e, m2))])
    return ExtendedSystem(
        A=A, B_w=B_w, B_d=B_d,
        C_v=C_v, D_vw=sys.D_vw, D_vd=sys.D_vd,
        C_vt=C_vt, D_vtw=D_vtw, D_vtd=D_vtd,
        C_e=C_e, D_ew=sys.D_ew, D_ed=sys.D_ed,
        n_x=n, n_psi1=m1, n_psi2=m2)


def transform(ext: ExtendedSystem, iqc: IqcSpec, cond_limit: float = 1e8) -> UncertainLtiSystem:
    """Swap the uncertainty output w for w_tilde = Psi2 w.

    Uses w = Dpsi2^-1 w_tilde - Dpsi2^-1 Cpsi2 psi2 and drops the original
    v output; the result's uncertainty satisfies the static diag(I, -I)
    multiplier."""
    p2 = iqc.Psi2
    n_w = p2.n_in
    if near_singular(p2.D, cond_limit):
        raise SingularDpsi2("Psi2 feedthrough is numerically singular")
    Dinv = np.linalg.inv(p2.D) if n_w else p2.D
    n_tot = ext.n_x + ext.n_psi1 + ext.n_psi2
    # state-feedback part of w: nonzero only on the psi2 block
    S = np.zeros((n_w, n_tot))
    if ext.n_psi2:
        S[:, ext.n_x + ext.n_psi1:] = -Dinv @ p2.C
    A = ext.A + ext.B_w @ S
    B_w = ext.B_w @ Dinv
    C_vt = ext.C_vt + ext.D_vtw @ S
    D_vtw = ext.D_vtw @ Dinv
    C_e = ext.C_e + ext.D_ew @ S
    D_ew = ext.D_ew @ Dinv
    return UncertainLtiSystem(
        A=A, B_w=B_w, B_d=ext.B_d,
        C_v=C_vt, D_vw=D_vtw, D_vd=ext.D_vtd,
        C_e=C_e, D_ew=D_ew, D_ed=ext.D_ed,
        state_labels=ext.state_labels)


def tilde_delta_response(iqc: IqcSpec, delta, v_tilde, dt: float,
                         cond_limit: float = 1e8) -> np.ndarray:
    """Simulate the transformed uncertainty Psi2 . Delta . Psi1^-1 on a
    sampled input signal (testing utility).

    `delta` is a FilterRealization or a callable mapping a sampled signal
    (N, n_v) to (N, n_w)."""
    p1, p2 = iqc.Psi1, iqc.Psi2
    if near_singular(p1.D, cond_limit):
        raise SingularDpsi1("Psi1 feedthrough is numerically singular")
    v_tilde = np.asarray(v_tilde, dtype=float).reshape(-1, p1.n_out)

    def run(f: FilterRealization, u):
        xs = simulate_lti_zoh(f.A, f.B, np.zeros(f.n_states), u, dt)
        return xs[:-1] @ f.C.T + u @ f.D.T

    v = run(invert_filter(p1, cond_limit), v_tilde)
    w = delta(v) if callable(delta) else run(delta, v)
    w = np.asarray(w, dtype=float).reshape(-1, p2.n_in)
    return run(p2, w)
