"""State-space data model: uncertain LTI plant, generic uncertain LTI
system, and the recurrent implicit neural network (RINN) controller.

All matrices are float64 numpy arrays, stored read-only. Channel widths of
zero are allowed everywhere (e.g. a plant with no disturbance input).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, FixedPointDiverged, NotDiagonal
from .matrix_core import require_symmetric, spectral_norm

__all__ = [
    "FixedPointCfg",
    "UncertainLtiPlant",
    "UncertainLtiSystem",
    "RinnController",
    "Theta",
    "SupplyRate",
    "StorageCertificate",
    "plant_to_system",
    "eval_controller",
    "check_wellposed",
]

ACTIVATIONS = ("tanh", "relu", "zero")


def _arr(x, rows, cols, name) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.shape != (rows, cols):
        if a.size != rows * cols:
            raise DimensionMismatch(f"{name} must be {rows}x{cols}, got {a.shape}")
        a = a.reshape(rows, cols)
    if a.size and not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    a = np.array(a, dtype=float, order="C")  # private copy, stored read-only
    a.flags.writeable = False
    return a


def _mat_to_json(a: np.ndarray):
    return [list(map(float, row)) for row in np.asarray(a)]


@dataclass(frozen=True)
class FixedPointCfg:
    tol: float = 1e-10
    max_iter: int = 500
    alpha: float = 0.5


@dataclass(frozen=True)
class UncertainLtiPlant:
    """Plant: LTI block in feedback with an uncertainty channel (v, w),
    driven by disturbance d and control u, with outputs e and y.

    The (y, u) feedthrough is identically zero by construction, which rules
    out algebraic loops through the controller output.
    """

    A_p: np.ndarray
    B_pw: np.ndarray
    B_pd: np.ndarray
    B_pu: np.ndarray
    C_pv: np.ndarray
    D_pvw: np.ndarray
    D_pvd: np.ndarray
    D_pvu: np.ndarray
    C_pe: np.ndarray
    D_pew: np.ndarray
    D_ped: np.ndarray
    D_peu: np.ndarray
    C_py: np.ndarray
    D_pyw: np.ndarray
    D_pyd: np.ndarray

    def __post_init__(self):
        n_p = np.asarray(self.A_p).shape[0]
        n_w = np.asarray(self.B_pw).shape[1]
        n_d = np.asarray(self.B_pd).shape[1]
        n_u = np.asarray(self.B_pu).shape[1]
        n_v = np.asarray(self.C_pv).shape[0]
        n_e = np.asarray(self.C_pe).shape[0]
        n_y = np.asarray(self.C_py).shape[0]
        shapes = {
            "A_p": (n_p, n_p), "B_pw": (n_p, n_w), "B_pd": (n_p, n_d), "B_pu": (n_p, n_u),
            "C_pv": (n_v, n_p), "D_pvw": (n_v, n_w), "D_pvd": (n_v, n_d), "D_pvu": (n_v, n_u),
            "C_pe": (n_e, n_p), "D_pew": (n_e, n_w), "D_ped": (n_e, n_d), "D_peu": (n_e, n_u),
            "C_py": (n_y, n_p), "D_pyw": (n_y, n_w), "D_pyd": (n_y, n_d),
        }
        for name, (r, c) in shapes.items():
            object.__setattr__(self, name, _arr(getattr(self, name), r, c, name))

    @property
    def n_p(self): return self.A_p.shape[0]
    @property
    def n_v(self): return self.C_pv.shape[0]
    @property
    def n_w(self): return self.B_pw.shape[1]
    @property
    def n_d(self): return self.B_pd.shape[1]
    @property
    def n_e(self): return self.C_pe.shape[0]
    @property
    def n_u(self): return self.B_pu.shape[1]
    @property
    def n_y(self): return self.C_py.shape[0]

    def to_json_dict(self) -> dict:
        out = {name: _mat_to_json(getattr(self, name)) for name in (
            "A_p", "B_pw", "B_pd", "B_pu", "C_pv", "D_pvw", "D_pvd", "D_pvu",
            "C_pe", "D_pew", "D_ped", "D_peu", "C_py", "D_pyw", "D_pyd")}
        out["dims"] = {"n_p": self.n_p, "n_v": self.n_v, "n_w": self.n_w,
                       "n_d": self.n_d, "n_e": self.n_e, "n_u": self.n_u, "n_y": self.n_y}
        return out

    @classmethod
    def from_json_dict(cls, doc: dict) -> "UncertainLtiPlant":
        d = doc["dims"]
        shapes = {
            "A_p": (d["n_p"], d["n_p"]), "B_pw": (d["n_p"], d["n_w"]),
            "B_pd": (d["n_p"], d["n_d"]), "B_pu": (d["n_p"], d["n_u"]),
            "C_pv": (d["n_v"], d["n_p"]), "D_pvw": (d["n_v"], d["n_w"]),
            "D_pvd": (d["n_v"], d["n_d"]), "D_pvu": (d["n_v"], d["n_u"]),
            "C_pe": (d["n_e"], d["n_p"]), "D_pew": (d["n_e"], d["n_w"]),
            "D_ped": (d["n_e"], d["n_d"]), "D_peu": (d["n_e"], d["n_u"]),
            "C_py": (d["n_y"], d["n_p"]), "D_pyw": (d["n_y"], d["n_w"]),
            "D_pyd": (d["n_y"], d["n_d"]),
        }
        kw = {}
        for name, (r, c) in shapes.items():
            raw = doc.get(name)
            kw[name] = np.zeros((r, c)) if raw is None else np.asarray(raw, dtype=float).reshape(r, c)
        return cls(**kw)


@dataclass(frozen=True)
class UncertainLtiSystem:
    """Generic uncertain LTI system with uncertainty channel (v, w),
    disturbance d and performance output e."""

    A: np.ndarray
    B_w: np.ndarray
    B_d: np.ndarray
    C_v: np.ndarray
    D_vw: np.ndarray
    D_vd: np.ndarray
    C_e: np.ndarray
    D_ew: np.ndarray
    D_ed: np.ndarray
    state_labels: tuple = ()  # optional partition labels, e.g. after extension

    def __post_init__(self):
        n = np.asarray(self.A).shape[0]
        n_w = np.asarray(self.B_w).shape[1]
        n_d = np.asarray(self.B_d).shape[1]
        n_v = np.asarray(self.C_v).shape[0]
        n_e = np.asarray(self.C_e).shape[0]
        shapes = {
            "A": (n, n), "B_w": (n, n_w), "B_d": (n, n_d),
            "C_v": (n_v, n), "D_vw": (n_v, n_w), "D_vd": (n_v, n_d),
            "C_e": (n_e, n), "D_ew": (n_e, n_w), "D_ed": (n_e, n_d),
        }
        for name, (r, c) in shapes.items():
            object.__setattr__(self, name, _arr(getattr(self, name), r, c, name))
        object.__setattr__(self, "state_labels", tuple(self.state_labels))

    @property
    def n(self): return self.A.shape[0]
    @property
    def n_v(self): return self.C_v.shape[0]
    @property
    def n_w(self): return self.B_w.shape[1]
    @property
    def n_d(self): return self.B_d.shape[1]
    @property
    def n_e(self): return self.C_e.shape[0]

    def to_json_dict(self) -> dict:
        out = {name: _mat_to_json(getattr(self, name)) for name in (
            "A", "B_w", "B_d", "C_v", "D_vw", "D_vd", "C_e", "D_ew", "D_ed")}
        out["dims"] = {"n": self.n, "n_v": self.n_v, "n_w": self.n_w,
                       "n_d": self.n_d, "n_e": self.n_e}
        return out

    @classmethod
    def from_json_dict(cls, doc: dict) -> "UncertainLtiSystem":
        d = doc["dims"]
        shapes = {
            "A": (d["n"], d["n"]), "B_w": (d["n"], d["n_w"]), "B_d": (d["n"], d["n_d"]),
            "C_v": (d["n_v"], d["n"]), "D_vw": (d["n_v"], d["n_w"]), "D_vd": (d["n_v"], d["n_d"]),
            "C_e": (d["n_e"], d["n"]), "D_ew": (d["n_e"], d["n_w"]), "D_ed": (d["n_e"], d["n_d"]),
        }
        kw = {}
        for name, (r, c) in shapes.items():
            raw = doc.get(name)
            kw[name] = np.zeros((r, c)) if raw is None else np.asarray(raw, dtype=float).reshape(r, c)
        return cls(**kw)


_THETA_BLOCKS = ("A_k", "B_kw", "B_ky", "C_kv", "D_kvw", "D_kvy", "C_ku", "D_kuw", "D_kuy")


@dataclass(frozen=True)
class RinnController:
    """RINN controller: LTI block in feedback with an elementwise scalar
    nonlinearity that is sector-bounded and slope-restricted in [0, 1]."""

    A_k: np.ndarray
    B_kw: np.ndarray
    B_ky: np.ndarray
    C_kv: np.ndarray
    D_kvw: np.ndarray
    D_kvy: np.ndarray
    C_ku: np.ndarray
    D_kuw: np.ndarray
    D_kuy: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        n_k = np.asarray(self.A_k).shape[0]
        n_phi = np.asarray(self.B_kw).shape[1]
        n_y = np.asarray(self.B_ky).shape[1]
        n_u = np.asarray(self.C_ku).shape[0]
        shapes = {
            "A_k": (n_k, n_k), "B_kw": (n_k, n_phi), "B_ky": (n_k, n_y),
            "C_kv": (n_phi, n_k), "D_kvw": (n_phi, n_phi), "D_kvy": (n_phi, n_y),
            "C_ku": (n_u, n_k), "D_kuw": (n_u, n_phi), "D_kuy": (n_u, n_y),
        }
        for name, (r, c) in shapes.items():
            object.__setattr__(self, name, _arr(getattr(self, name), r, c, name))

    @property
    def n_k(self): return self.A_k.shape[0]
    @property
    def n_phi(self): return self.B_kw.shape[1]
    @property
    def n_y(self): return self.B_ky.shape[1]
    @property
    def n_u(self): return self.C_ku.shape[0]

    @classmethod
    def zeros(cls, n_k, n_phi, n_y, n_u, activation="tanh") -> "RinnController":
        z = np.zeros
        return cls(z((n_k, n_k)), z((n_k, n_phi)), z((n_k, n_y)),
                   z((n_phi, n_k)), z((n_phi, n_phi)), z((n_phi, n_y)),
                   z((n_u, n_k)), z((n_u, n_phi)), z((n_u, n_y)), activation)

    def blocks(self) -> dict:
        return {name: getattr(self, name) for name in _THETA_BLOCKS}

    def with_blocks(self, **updates) -> "RinnController":
        return replace(self, **updates)

    def flatten(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in _THETA_BLOCKS]) \
            if any(getattr(self, n).size for n in _THETA_BLOCKS) else np.zeros(0)

    def unflatten(self, vec: np.ndarray) -> "RinnController":
        out, at = {}, 0
        for name in _THETA_BLOCKS:
            b = getattr(self, name)
            out[name] = np.asarray(vec[at:at + b.size], dtype=float).reshape(b.shape)
            at += b.size
        if at != np.size(vec):
            raise DimensionMismatch(f"expected {at} entries, got {np.size(vec)}")
        return replace(self, **out)

    def frobenius_distance(self, other: "RinnController") -> float:
        return float(np.sqrt(sum(
            np.sum((getattr(self, n) - getattr(other, n)) ** 2) for n in _THETA_BLOCKS)))

    def to_json_dict(self) -> dict:
        out = {name: _mat_to_json(getattr(self, name)) for name in _THETA_BLOCKS}
        out["activation"] = self.activation
        out["dims"] = {"n_k": self.n_k, "n_phi": self.n_phi,
                       "n_y": self.n_y, "n_u": self.n_u}
        return out

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RinnController":
        d = doc["dims"]
        n_k, n_phi, n_y, n_u = d["n_k"], d["n_phi"], d["n_y"], d["n_u"]
        shapes = {
            "A_k": (n_k, n_k), "B_kw": (n_k, n_phi), "B_ky": (n_k, n_y),
            "C_kv": (n_phi, n_k), "D_kvw": (n_phi, n_phi), "D_kvy": (n_phi, n_y),
            "C_ku": (n_u, n_k), "D_kuw": (n_u, n_phi), "D_kuy": (n_u, n_y),
        }
        kw = {}
        for name, (r, c) in shapes.items():
            raw = doc.get(name)
            kw[name] = np.zeros((r, c)) if raw is None else np.asarray(raw, dtype=float).reshape(r, c)
        return cls(activation=doc.get("activation", "tanh"), **kw)


Theta = RinnController


@dataclass(frozen=True)
class SupplyRate:
    """Quadratic supply rate [d; e]^T X [d; e] with X partitioned by (d, e)."""

    X_dd: np.ndarray
    X_de: np.ndarray
    X_ee: np.ndarray

    def __post_init__(self):
        n_d = np.asarray(self.X_dd).shape[0]
        n_e = np.asarray(self.X_ee).shape[0]
        object.__setattr__(self, "X_dd", _arr(require_symmetric(np.asarray(self.X_dd, dtype=float).reshape(n_d, n_d)), n_d, n_d, "X_dd"))
        object.__setattr__(self, "X_ee", _arr(require_symmetric(np.asarray(self.X_ee, dtype=float).reshape(n_e, n_e)), n_e, n_e, "X_ee"))
        object.__setattr__(self, "X_de", _arr(self.X_de, n_d, n_e, "X_de"))

    @property
    def n_d(self): return self.X_dd.shape[0]
    @property
    def n_e(self): return self.X_ee.shape[0]

    def matrix(self) -> np.ndarray:
        return np.block([[self.X_dd, self.X_de], [self.X_de.T, self.X_ee]])

    def evaluate(self, d: np.ndarray, e: np.ndarray) -> float:
        d = np.asarray(d, dtype=float).reshape(self.n_d)
        e = np.asarray(e, dtype=float).reshape(self.n_e)
        return float(d @ self.X_dd @ d + 2.0 * d @ self.X_de @ e + e @ self.X_ee @ e)

    @classmethod
    def stability(cls, n_d: int, n_e: int) -> "SupplyRate":
        return cls(np.zeros((n_d, n_d)), np.zeros((n_d, n_e)), np.zeros((n_e, n_e)))

    @classmethod
    def l2_gain(cls, gamma_sq: float, n_d: int, n_e: int, scale: float = 1.0) -> "SupplyRate":
        """scale * (gamma_sq ||d||^2 - ||e||^2); energy ratio bound gamma_sq."""
        return cls(scale * gamma_sq * np.eye(n_d), np.zeros((n_d, n_e)),
                   -scale * np.eye(n_e))

    @classmethod
    def passivity(cls, n: int) -> "SupplyRate":
        return cls(np.zeros((n, n)), 0.5 * np.eye(n), np.zeros((n, n)))

    def to_json_dict(self) -> dict:
        return {"X_dd": _mat_to_json(self.X_dd), "X_de": _mat_to_json(self.X_de),
                "X_ee": _mat_to_json(self.X_ee),
                "dims": {"n_d": self.n_d, "n_e": self.n_e}}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SupplyRate":
        d = doc["dims"]
        return cls(np.asarray(doc["X_dd"], dtype=float).reshape(d["n_d"], d["n_d"]),
                   np.asarray(doc["X_de"], dtype=float).reshape(d["n_d"], d["n_e"]),
                   np.asarray(doc["X_ee"], dtype=float).reshape(d["n_e"], d["n_e"]))


@dataclass(frozen=True)
class StorageCertificate:
    """Certificate (P, Lambda, lambda_p) for a dissipativity condition."""

    P: np.ndarray
    Lambda: np.ndarray
    lambda_p: float = 1.0
    feasibility_residual: float = float("nan")

    def __post_init__(self):
        n = np.asarray(self.P).shape[0]
        m = np.asarray(self.Lambda).shape[0]
        P = require_symmetric(np.asarray(self.P, dtype=float).reshape(n, n))
        object.__setattr__(self, "P", _arr(P, n, n, "P"))
        Lam = np.asarray(self.Lambda, dtype=float).reshape(m, m)
        if m and np.max(np.abs(Lam - np.diag(np.diag(Lam)))) > 0:
            raise NotDiagonal("Lambda must be diagonal")
        object.__setattr__(self, "Lambda", _arr(Lam, m, m, "Lambda"))

    @property
    def lambda_diag(self) -> np.ndarray:
        return np.diag(self.Lambda)

    def storage(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float).reshape(self.P.shape[0])
        return float(x @ self.P @ x)

    def to_json_dict(self) -> dict:
        return {"P": _mat_to_json(self.P), "Lambda": _mat_to_json(self.Lambda),
                "lambda_p": float(self.lambda_p),
                "feasibility_residual": float(self.feasibility_residual)}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "StorageCertificate":
        P = np.asarray(doc["P"], dtype=float)
        Lam = np.asarray(doc["Lambda"], dtype=float)
        if Lam.ndim == 1:
            Lam = np.diag(Lam)
        if Lam.size == 0:
            Lam = Lam.reshape(0, 0)
        return cls(P, Lam, float(doc.get("lambda_p", 1.0)),
                   float(doc.get("feasibility_residual", float("nan"))))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def plant_to_system(plant: UncertainLtiPlant, controller: RinnController | None = None) -> UncertainLtiSystem:
    """Open-loop plant (u = 0, y dropped) or closed loop with a controller."""
    if controller is not None:
        from .interconnect import close_loop

        return close_loop(plant, controller)
    return UncertainLtiSystem(
        A=plant.A_p, B_w=plant.B_pw, B_d=plant.B_pd,
        C_v=plant.C_pv, D_vw=plant.D_pvw, D_vd=plant.D_pvd,
        C_e=plant.C_pe, D_ew=plant.D_pew, D_ed=plant.D_ped,
    )


def eval_controller(k: RinnController, x_k, y, fp: FixedPointCfg = FixedPointCfg()):
    """Evaluate the controller at one instant: returns (u, w_k, x_k_dot).

    w_k solves the implicit equation w = phi(C_kv x_k + D_kvw w + D_kvy y)
    to the residual tolerance in `fp`.
    """
    x_k = np.asarray(x_k, dtype=float).reshape(k.n_k)
    y = np.asarray(y, dtype=float).reshape(k.n_y)
    act = _kernels.activation_id(k.activation)
    bias = k.C_kv @ x_k + k.D_kvy @ y
    w, res, _ = _kernels.fixed_point(bias, k.D_kvw, act, fp.tol, fp.max_iter, fp.alpha)
    if res > fp.tol:
        raise FixedPointDiverged(f"residual {res:.3e} > tol {fp.tol:.1e}")
    u = k.C_ku @ x_k + k.D_kuw @ w + k.D_kuy @ y
    x_dot = k.A_k @ x_k + k.B_kw @ w + k.B_ky @ y
    return u, w, x_dot


def check_wellposed(k: RinnController, Lambda, eps: float = 1e-6) -> bool:
    """Well-posedness of the implicit layer for a diagonal Lambda > 0:
    Lambda D_kvw + D_kvw^T Lambda - 2 Lambda must be negative definite."""
    if k.n_phi == 0:
        return True
    Lam = np.asarray(Lambda, dtype=float)
    if Lam.ndim == 1:
        Lam = np.diag(Lam)
    if np.max(np.abs(Lam - np.diag(np.diag(Lam)))) > 0:
        raise NotDiagonal("Lambda must be diagonal")
    M = Lam @ k.D_kvw + k.D_kvw.T @ Lam - 2.0 * Lam
    lam_max = float(np.max(np.linalg.eigvalsh(0.5 * (M + M.T))))
    return lam_max < -eps * max(1.0, spectral_norm(M))
