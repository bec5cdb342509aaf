"""Thin semidefinite-programming layer used by every LMI in the toolkit.

Problems are declared through :class:`SdpProblem` (decision variables,
affine PSD/NSD constraints, optional objective) and solved by
:func:`solve_sdp`, which tries a chain of interior-point/conic solvers and
numerically re-checks every matrix constraint before reporting success.
"""
from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .errors import Infeasible, SolverNumericalFailure

__all__ = ["SdpProblem", "SdpSolution", "solve_sdp", "frob_distance", "DEFAULT_FEAS_TOL"]

DEFAULT_FEAS_TOL = 1e-7

_ACCEPT = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
_INFEAS = (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE)


def frob_distance(pairs):
    """Frobenius norm of stacked block differences, ||theta - theta'||_F.

    `pairs` is an iterable of (expression, target) with matching shapes;
    zero-size blocks are skipped. Encoded as a single second-order cone.
    """
    vecs = []
    for expr, target in pairs:
        if 0 in expr.shape:
            continue
        diff = expr - target
        vecs.append(cp.vec(diff, order="F") if diff.ndim == 2 else cp.reshape(diff, (-1,), order="F"))
    if not vecs:
        return cp.Constant(0.0)
    return cp.norm(cp.hstack(vecs), 2)


@dataclass
class SdpSolution:
    values: dict
    status: str
    solver: str
    objective: float | None
    worst_residual: float

    def __getitem__(self, name):
        return self.values[name]


class SdpProblem:
    """Conic feasibility / least-squares problem over matrix variables."""

    def __init__(self):
        self._vars: dict[str, cp.Variable] = {}
        self._diag: dict[str, cp.Variable] = {}
        self._constraints: list = []
        self._matrix_cons: list[tuple[str, object]] = []  # ("psd"|"nsd", expr)
        self._objective = None

    # -- variables ----------------------------------------------------
    def matrix_var(self, name, rows, cols, symmetric=False):
        if name in self._vars or name in self._diag:
            raise ValueError(f"variable {name!r} already declared")
        v = cp.Variable((rows, cols), name=name, symmetric=symmetric)
        self._vars[name] = v
        return v

    def diag_var(self, name, n, nonneg=True):
        """Diagonal matrix variable; returns the (n, n) diagonal expression."""
        if name in self._vars or name in self._diag:
            raise ValueError(f"variable {name!r} already declared")
        v = cp.Variable(n, name=name, nonneg=nonneg)
        self._diag[name] = v
        return cp.diag(v)

    def scalar_var(self, name, nonneg=False):
        if name in self._vars or name in self._diag:
            raise ValueError(f"variable {name!r} already declared")
        v = cp.Variable(name=name, nonneg=nonneg)
        self._vars[name] = v
        return v

    # -- constraints and objective -------------------------------------
    def add_psd(self, expr):
        self._matrix_cons.append(("psd", expr))
        self._constraints.append(expr >> 0)

    def add_nsd(self, expr):
        self._matrix_cons.append(("nsd", expr))
        self._constraints.append(expr << 0)

    def add(self, constraint):
        """Attach a raw scalar/vector constraint (bounds, norms, ...)."""
        self._constraints.append(constraint)

    def minimize(self, expr):
        self._objective = cp.Minimize(expr)

    def maximize(self, expr):
        self._objective = cp.Maximize(expr)

    # -- introspection used by solve_sdp --------------------------------
    def _cvxpy_problem(self) -> cp.Problem:
        objective = self._objective if self._objective is not None else cp.Minimize(0)
        return cp.Problem(objective, self._constraints)

    def _worst_matrix_residual(self) -> float:
        worst = 0.0
        for kind, expr in self._matrix_cons:
            val = expr.value
            if val is None:
                return np.inf
            val = 0.5 * (val + val.T)
            if val.size == 0:
                continue
            lam = np.linalg.eigvalsh(val)
            scale = max(1.0, float(np.max(np.abs(lam))))
            viol = max(0.0, float(-lam[0] if kind == "psd" else lam[-1]))
            worst = max(worst, viol / scale)
        return worst

    def _values(self) -> dict:
        out = {}
        for name, v in self._vars.items():
            out[name] = None if v.value is None else np.array(v.value, dtype=float)
        for name, v in self._diag.items():
            out[name] = None if v.value is None else np.diag(np.asarray(v.value, dtype=float).ravel())
        return out


_SOLVER_KWARGS = {
    "CLARABEL": {},
    "CVXOPT": {},
    "SCS": {"eps_abs": 1e-9, "eps_rel": 1e-9, "max_iters": 200_000},
}


def solve_sdp(problem: SdpProblem, feas_tol: float = DEFAULT_FEAS_TOL, solvers=None) -> SdpSolution:
    """Solve, trying each solver until one returns a verified solution.

    Raises :class:`Infeasible` when a solver reports (possibly inaccurate)
    infeasibility, and :class:`SolverNumericalFailure` when every solver
    breaks down or returns a solution violating `feas_tol`.
    """
    if solvers is None:
        installed = cp.installed_solvers()
        solvers = [s for s in ("CLARABEL", "CVXOPT", "SCS") if s in installed]
    prob = problem._cvxpy_problem()
    statuses = []
    for solver in solvers:
        try:
            import warnings

            with warnings.catch_warnings():
                # inaccurate solutions are re-checked numerically below
                warnings.simplefilter("ignore", UserWarning)
                prob.solve(solver=solver, **_SOLVER_KWARGS.get(solver, {}))
        except cp.error.SolverError:
            statuses.append(f"{solver}:error")
            continue
        status = prob.status
        statuses.append(f"{solver}:{status}")
        if status in _INFEAS:
            raise Infeasible(status=status)
        if status in _ACCEPT:
            worst = problem._worst_matrix_residual()
            if worst <= feas_tol:
                obj = None if prob.value is None else float(prob.value)
                return SdpSolution(problem._values(), status, solver, obj, worst)
        # unbounded or inaccurate beyond tolerance: try the next solver
    raise SolverNumericalFailure(statuses=statuses)
