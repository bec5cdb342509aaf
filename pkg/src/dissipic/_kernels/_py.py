"""Pure-numpy kernels: implicit-layer fixed point and controller RK4 step.

This is the fallback twin of the compiled module `_fast`; both expose the
same functions and must produce matching results (see tests).
"""
import numpy as np

BACKEND = "python"

ACT_TANH = 0
ACT_RELU = 1
ACT_ZERO = 2

_PICARD_BUDGET = 60  # iterations before switching to Newton


def _phi(z, act):
    if act == ACT_TANH:
        return np.tanh(z)
    if act == ACT_RELU:
        return np.maximum(z, 0.0)
    return np.zeros_like(z)


def _dphi(z, act):
    if act == ACT_TANH:
        t = np.tanh(z)
        return 1.0 - t * t
    if act == ACT_RELU:
        return (z > 0.0).astype(float)
    return np.zeros_like(z)


def fixed_point(bias, D, act, tol=1e-10, max_iter=500, alpha=0.5):
    """Solve w = phi(bias + D w); returns (w, residual, iterations).

    Damped Picard iteration with a Newton fallback once Picard stalls.
    The caller decides whether a residual above `tol` is an error.
    """
    bias = np.asarray(bias, dtype=float)
    n = bias.shape[0]
    if n == 0 or act == ACT_ZERO:
        return np.zeros(n), 0.0, 0
    w = np.zeros(n)
    it = 0
    budget = min(max_iter, _PICARD_BUDGET)
    while it < budget:
        fw = _phi(bias + D @ w, act)
        res = float(np.max(np.abs(w - fw)))
        if res <= tol:
            return w, res, it
        w = (1.0 - alpha) * w + alpha * fw
        it += 1
    # Newton on g(w) = w - phi(bias + D w)
    res = np.inf
    while it < max_iter:
        z = bias + D @ w
        g = w - _phi(z, act)
        res = float(np.max(np.abs(g)))
        if res <= tol:
            return w, res, it
        J = np.eye(n) - _dphi(z, act)[:, None] * D
        try:
            step = np.linalg.solve(J, g)
        except np.linalg.LinAlgError:
            step = g  # degenerate Jacobian: fall back to a Picard-like step
        # backtracking on the residual norm
        scale = 1.0
        for _ in range(12):
            w_new = w - scale * step
            g_new = w_new - _phi(bias + D @ w_new, act)
            if np.max(np.abs(g_new)) < res:
                break
            scale *= 0.5
        w = w - scale * step
        it += 1
    g = w - _phi(bias + D @ w, act)
    return w, float(np.max(np.abs(g))), it


def controller_step(Ak, Bkw, Bky, Ckv, Dkvw, Dkvy, Cku, Dkuw, Dkuy, act,
                    x, y, dt, tol=1e-10, max_iter=500, alpha=0.5):
    """One RK4 step of the controller state with the measurement held.

    Returns (u, x_next, w, worst_residual) where u and w are evaluated at
    the step start (the value a zero-order hold would latch).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    bias_y = Dkvy @ y
    By = Bky @ y

    def deriv(xs):
        w, res, _ = fixed_point(Ckv @ xs + bias_y, Dkvw, act, tol, max_iter, alpha)
        return Ak @ xs + Bkw @ w + By, w, res

    k1, w1, r1 = deriv(x)
    u = Cku @ x + Dkuw @ w1 + Dkuy @ y
    k2, _, r2 = deriv(x + 0.5 * dt * k1)
    k3, _, r3 = deriv(x + 0.5 * dt * k2)
    k4, _, r4 = deriv(x + dt * k3)
    x_next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return u, x_next, w1, max(r1, r2, r3, r4)
