"""Uncertainty descriptions: quadratic constraints, static IQCs, dynamic
IQCs with stable filters, the controller sector multiplier, and the
combined closed-loop multiplier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, MvvNotPsd, NotDiagonal
from .matrix_core import factor_gram, near_singular, require_symmetric

__all__ = [
    "FilterRealization",
    "IqcSpec",
    "CombinedMultiplier",
    "sector_multiplier",
    "qc_holds",
    "norm_bound_multiplier",
    "combine_multipliers",
]


def _as_diag(Lambda) -> np.ndarray:
    Lam = np.asarray(Lambda, dtype=float)
    if Lam.ndim == 1:
        Lam = np.diag(Lam)
    if Lam.ndim != 2 or Lam.shape[0] != Lam.shape[1]:
        raise NotDiagonal("Lambda must be a square diagonal matrix or a vector")
    if Lam.size and np.max(np.abs(Lam - np.diag(np.diag(Lam)))) > 0:
        raise NotDiagonal("Lambda must be diagonal")
    return Lam


@dataclass(frozen=True)
class FilterRealization:
    """State-space filter (A, B, C, D); static filters have zero states."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n \
                or D.shape != (C.shape[0], B.shape[1]):
            raise DimensionMismatch("filter realization blocks are not conformal")
        for name, val in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, name, val)

    @property
    def n_states(self): return self.A.shape[0]
    @property
    def n_in(self): return self.B.shape[1]
    @property
    def n_out(self): return self.C.shape[0]

    def is_stable(self) -> bool:
        if self.n_states == 0:
            return True
        return bool(np.max(np.linalg.eigvals(self.A).real) < 0)

    def has_stable_inverse(self) -> bool:
        """Square filter with invertible feedthrough and Hurwitz inverse
        dynamics A - B D^-1 C (minimum phase)."""
        if self.n_in != self.n_out or near_singular(self.D):
            return False
        if self.n_states == 0:
            return True
        Ainv = self.A - self.B @ np.linalg.solve(self.D, self.C)
        return bool(np.max(np.linalg.eigvals(Ainv).real) < 0)

    @classmethod
    def static_gain(cls, G) -> "FilterRealization":
        G = np.atleast_2d(np.asarray(G, dtype=float))
        return cls(np.zeros((0, 0)), np.zeros((0, G.shape[1])),
                   np.zeros((G.shape[0], 0)), G)

    def to_json_dict(self) -> dict:
        return {"A": self.A.tolist(), "B": self.B.tolist(),
                "C": self.C.tolist(), "D": self.D.tolist(),
                "dims": {"n": self.n_states, "n_in": self.n_in, "n_out": self.n_out}}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FilterRealization":
        d = doc["dims"]
        return cls(np.asarray(doc["A"], dtype=float).reshape(d["n"], d["n"]),
                   np.asarray(doc["B"], dtype=float).reshape(d["n"], d["n_in"]),
                   np.asarray(doc["C"], dtype=float).reshape(d["n_out"], d["n"]),
                   np.asarray(doc["D"], dtype=float).reshape(d["n_out"], d["n_in"]))


@dataclass(frozen=True)
class IqcSpec:
    """Uncertainty description.

    kind "qc":      pointwise quadratic constraint [v; w]^T M [v; w] >= 0
    kind "static":  integral constraint with identity filter
    kind "dynamic": filters (Psi1 on v, Psi2 on w) with M = diag(I, -I);
                    Psi must be stable with a stable proper inverse.
    """

    kind: str
    M: np.ndarray
    n_v: int
    Psi1: FilterRealization | None = None
    Psi2: FilterRealization | None = None

    def __post_init__(self):
        if self.kind not in ("qc", "static", "dynamic"):
            raise ValueError(f"unknown IQC kind {self.kind!r}")
        M = require_symmetric(np.asarray(self.M, dtype=float))
        object.__setattr__(self, "M", M)
        if not 0 <= self.n_v <= M.shape[0]:
            raise DimensionMismatch("n_v must split the multiplier")
        if self.kind == "dynamic":
            p1, p2 = self.Psi1, self.Psi2
            if p1 is None or p2 is None:
                raise ValueError("dynamic IQC requires Psi1 and Psi2")
            n_z1, n_z2 = p1.n_out, p2.n_out
            expect = np.block([[np.eye(n_z1), np.zeros((n_z1, n_z2))],
                               [np.zeros((n_z2, n_z1)), -np.eye(n_z2)]])
            if M.shape != expect.shape or np.max(np.abs(M - expect)) > 1e-12:
                raise ValueError("dynamic IQC multiplier must be diag(I, -I)")
            if p1.n_in != self.n_v:
                raise DimensionMismatch("Psi1 input width must equal n_v")
            if p1.n_out != p1.n_in or p2.n_out != p2.n_in:
                raise DimensionMismatch("filters must be square for invertibility")
            if not (p1.is_stable() and p2.is_stable()):
                raise ValueError("IQC filters must be stable")
            if near_singular(p2.D):
                raise ValueError("Psi2 feedthrough must be invertible")
            if not (p1.has_stable_inverse() and p2.has_stable_inverse()):
                raise ValueError("IQC filters must have stable proper inverses")

    @property
    def n_w(self) -> int:
        return self.M.shape[0] - self.n_v if self.kind != "dynamic" else self.Psi2.n_in

    @property
    def M_vv(self): return self.M[:self.n_v, :self.n_v]
    @property
    def M_vw(self): return self.M[:self.n_v, self.n_v:]
    @property
    def M_ww(self): return self.M[self.n_v:, self.n_v:]

    @classmethod
    def qc(cls, M, n_v) -> "IqcSpec":
        return cls("qc", M, n_v)

    @classmethod
    def static(cls, M, n_v) -> "IqcSpec":
        return cls("static", M, n_v)

    @classmethod
    def dynamic(cls, Psi1: FilterRealization, Psi2: FilterRealization) -> "IqcSpec":
        M = np.block([[np.eye(Psi1.n_out), np.zeros((Psi1.n_out, Psi2.n_out))],
                      [np.zeros((Psi2.n_out, Psi1.n_out)), -np.eye(Psi2.n_out)]])
        return cls("dynamic", M, Psi1.n_in, Psi1, Psi2)

    def to_json_dict(self) -> dict:
        out = {"kind": self.kind, "M": self.M.tolist(), "n_v": self.n_v}
        if self.kind == "dynamic":
            out["Psi1"] = self.Psi1.to_json_dict()
            out["Psi2"] = self.Psi2.to_json_dict()
        return out

    @classmethod
    def from_json_dict(cls, doc: dict) -> "IqcSpec":
        kind = doc["kind"]
        M = np.asarray(doc["M"], dtype=float)
        if kind == "dynamic":
            return cls(kind, M, int(doc["n_v"]),
                       FilterRealization.from_json_dict(doc["Psi1"]),
                       FilterRealization.from_json_dict(doc["Psi2"]))
        return cls(kind, M, int(doc["n_v"]))


@dataclass(frozen=True)
class CombinedMultiplier:
    """Static multiplier for the closed loop: plant channels first, then
    controller sector channels. The (v_k, v_k) block is identically zero."""

    M_vv: np.ndarray
    M_vw: np.ndarray
    M_ww: np.ndarray
    L_Delta: np.ndarray
    n_vp: int
    n_wp: int
    n_vk: int

    def matrix(self) -> np.ndarray:
        return np.block([[self.M_vv, self.M_vw], [self.M_vw.T, self.M_ww]])


def sector_multiplier(Lambda) -> np.ndarray:
    """Multiplier [[0, L], [L, -2L]] for elementwise sector-[0, 1]
    nonlinearities with diagonal scaling L >= 0."""
    Lam = _as_diag(Lambda)
    if np.any(np.diag(Lam) < 0):
        raise ValueError("Lambda entries must be nonnegative")
    n = Lam.shape[0]
    return np.block([[np.zeros((n, n)), Lam], [Lam, -2.0 * Lam]])


def qc_holds(M, v, w, tol: float = 1e-12) -> bool:
    """Pointwise quadratic constraint [v; w]^T M [v; w] >= 0 within tol."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    M = require_symmetric(np.asarray(M, dtype=float))
    if M.shape[0] != v.size + w.size:
        raise DimensionMismatch(f"M is {M.shape[0]}x{M.shape[0]}, signals stack to {v.size + w.size}")
    z = np.concatenate([v, w])
    return bool(z @ M @ z >= -tol * (v @ v + w @ w))


def norm_bound_multiplier(gain: float, scale: float, n_v: int, n_w: int) -> np.ndarray:
    """Multiplier scale * diag(gain^2 I, -I) for a norm bound ||Delta|| <= gain."""
    if gain <= 0 or scale <= 0:
        raise ValueError("gain and scale must be positive")
    return scale * np.block([
        [gain ** 2 * np.eye(n_v), np.zeros((n_v, n_w))],
        [np.zeros((n_w, n_v)), -np.eye(n_w)],
    ])


def combine_multipliers(M_dp, Lambda, n_vk: int, n_vp: int | None = None) -> CombinedMultiplier:
    """Assemble the closed-loop multiplier from the plant multiplier and the
    controller sector scaling, plant channels first.

    The (v, v) plant block must be PSD; its Gram factor (padded with zero
    columns over the controller channels) is returned as L_Delta.
    """
    M_dp = require_symmetric(np.asarray(M_dp, dtype=float))
    if n_vp is None:
        if M_dp.shape[0] % 2:
            raise DimensionMismatch("cannot infer the v/w split of an odd-size multiplier")
        n_vp = M_dp.shape[0] // 2
    n_wp = M_dp.shape[0] - n_vp
    Lam = _as_diag(Lambda)
    if Lam.shape[0] != n_vk:
        raise DimensionMismatch(f"Lambda must be {n_vk}x{n_vk}")
    Mvv_p = M_dp[:n_vp, :n_vp]
    Mvw_p = M_dp[:n_vp, n_vp:]
    Mww_p = M_dp[n_vp:, n_vp:]
    try:
        L_dp = factor_gram(Mvv_p)
    except Exception as exc:
        raise MvvNotPsd(str(exc)) from exc
    z = np.zeros
    M_vv = np.block([[Mvv_p, z((n_vp, n_vk))], [z((n_vk, n_vp)), z((n_vk, n_vk))]])
    M_vw = np.block([[Mvw_p, z((n_vp, n_vk))], [z((n_vk, n_wp)), Lam]])
    M_ww = np.block([[Mww_p, z((n_wp, n_vk))], [z((n_vk, n_wp)), -2.0 * Lam]])
    L_Delta = np.hstack([L_dp, z((L_dp.shape[0], n_vk))])
    return CombinedMultiplier(M_vv, M_vw, M_ww, L_Delta, n_vp, n_wp, n_vk)
