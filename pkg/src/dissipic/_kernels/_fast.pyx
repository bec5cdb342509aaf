# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: implicit-layer fixed point and controller RK4 step.

Mirror of `_py`; the Python twin is the reference implementation.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, tanh

cnp.import_array()

BACKEND = "compiled"

ACT_TANH = 0
ACT_RELU = 1
ACT_ZERO = 2

cdef int _PICARD_BUDGET = 60


cdef inline double _phi(double z, int act) noexcept nogil:
    if act == 0:
        return tanh(z)
    elif act == 1:
        return z if z > 0.0 else 0.0
    return 0.0


def _phi_vec(z, int act):
    if act == ACT_TANH:
        return np.tanh(z)
    if act == ACT_RELU:
        return np.maximum(z, 0.0)
    return np.zeros_like(z)


def _dphi_vec(z, int act):
    if act == ACT_TANH:
        t = np.tanh(z)
        return 1.0 - t * t
    if act == ACT_RELU:
        return (z > 0.0).astype(np.float64)
    return np.zeros_like(z)


cdef double _residual(const double[::1] bias, const double[:, ::1] D, double[::1] w,
                      double[::1] fw, int act) noexcept nogil:
    """fw <- phi(bias + D w); returns max |w - fw|."""
    cdef int n = w.shape[0]
    cdef int i, j
    cdef double z, r = 0.0, d
    for i in range(n):
        z = bias[i]
        for j in range(n):
            z += D[i, j] * w[j]
        fw[i] = _phi(z, act)
        d = fabs(w[i] - fw[i])
        if d > r:
            r = d
    return r


def fixed_point(bias_in, D_in, int act, double tol=1e-10, int max_iter=500,
                double alpha=0.5):
    """Solve w = phi(bias + D w); returns (w, residual, iterations)."""
    bias = np.ascontiguousarray(bias_in, dtype=np.float64)
    cdef int n = bias.shape[0]
    if n == 0 or act == ACT_ZERO:
        return np.zeros(n), 0.0, 0
    D = np.ascontiguousarray(D_in, dtype=np.float64)
    w = np.zeros(n)
    fw = np.zeros(n)
    cdef const double[::1] bv = bias
    cdef double[::1] wv = w
    cdef double[::1] fv = fw
    cdef const double[:, ::1] Dv = D
    cdef int it = 0, i
    cdef int budget = max_iter if max_iter < _PICARD_BUDGET else _PICARD_BUDGET
    cdef double res
    while it < budget:
        res = _residual(bv, Dv, wv, fv, act)
        if res <= tol:
            return w, res, it
        for i in range(n):
            wv[i] = (1.0 - alpha) * wv[i] + alpha * fv[i]
        it += 1
    # Newton fallback (rare path; numpy handles the linear solve)
    cdef double scale, gres
    while it < max_iter:
        z_arr = bias + D.dot(w)
        g = w - _phi_vec(z_arr, act)
        gres = float(np.max(np.abs(g)))
        if gres <= tol:
            return w, gres, it
        J = np.eye(n) - _dphi_vec(z_arr, act)[:, None] * D
        try:
            step = np.linalg.solve(J, g)
        except np.linalg.LinAlgError:
            step = g
        scale = 1.0
        for _ in range(12):
            w_new = w - scale * step
            g_new = w_new - _phi_vec(bias + D.dot(w_new), act)
            if np.max(np.abs(g_new)) < gres:
                break
            scale *= 0.5
        w = w - scale * step
        it += 1
    g = w - _phi_vec(bias + D.dot(w), act)
    return w, float(np.max(np.abs(g))), it


def controller_step(Ak_in, Bkw_in, Bky_in, Ckv_in, Dkvw_in, Dkvy_in,
                    Cku_in, Dkuw_in, Dkuy_in, int act, x_in, y_in, double dt,
                    double tol=1e-10, int max_iter=500, double alpha=0.5):
    """One RK4 step of the controller state with the measurement held.

    Returns (u, x_next, w, worst_residual); u and w are taken at the step
    start (the value a zero-order hold would latch).
    """
    Ak = np.ascontiguousarray(Ak_in, dtype=np.float64)
    Bkw = np.ascontiguousarray(Bkw_in, dtype=np.float64)
    Bky = np.ascontiguousarray(Bky_in, dtype=np.float64)
    Ckv = np.ascontiguousarray(Ckv_in, dtype=np.float64)
    Dkvw = np.ascontiguousarray(Dkvw_in, dtype=np.float64)
    Dkvy = np.ascontiguousarray(Dkvy_in, dtype=np.float64)
    Cku = np.ascontiguousarray(Cku_in, dtype=np.float64)
    Dkuw = np.ascontiguousarray(Dkuw_in, dtype=np.float64)
    Dkuy = np.ascontiguousarray(Dkuy_in, dtype=np.float64)
    x = np.ascontiguousarray(x_in, dtype=np.float64)
    y = np.ascontiguousarray(y_in, dtype=np.float64)

    bias_y = Dkvy.dot(y)
    By = Bky.dot(y)

    w1, r1, _ = fixed_point(Ckv.dot(x) + bias_y, Dkvw, act, tol, max_iter, alpha)
    k1 = Ak.dot(x) + Bkw.dot(w1) + By
    u = Cku.dot(x) + Dkuw.dot(w1) + Dkuy.dot(y)

    x2 = x + 0.5 * dt * k1
    w2, r2, _ = fixed_point(Ckv.dot(x2) + bias_y, Dkvw, act, tol, max_iter, alpha)
    k2 = Ak.dot(x2) + Bkw.dot(w2) + By

    x3 = x + 0.5 * dt * k2
    w3, r3, _ = fixed_point(Ckv.dot(x3) + bias_y, Dkvw, act, tol, max_iter, alpha)
    k3 = Ak.dot(x3) + Bkw.dot(w3) + By

    x4 = x + dt * k3
    w4, r4, _ = fixed_point(Ckv.dot(x4) + bias_y, Dkvw, act, tol, max_iter, alpha)
    k4 = Ak.dot(x4) + Bkw.dot(w4) + By

    x_next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return u, x_next, w1, max(r1, r2, r3, r4)
