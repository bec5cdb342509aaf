"""Benchmark the compiled kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--n-phi 16] [--reps 2000]
"""
import argparse
import time

import numpy as np

from dissipic._kernels import _py

try:
    from dissipic._kernels import _fast
except ImportError:
    _fast = None


def make_layer(rng, n_phi):
    D = rng.standard_normal((n_phi, n_phi))
    while np.max(np.linalg.eigvalsh(D + D.T)) > 1.6:
        D *= 0.7
    return D


def bench_fixed_point(impl, D, biases, reps):
    t0 = time.perf_counter()
    acc = 0.0
    for i in range(reps):
        w, _, _ = impl.fixed_point(biases[i % len(biases)], D, 0)
        acc += w[0]
    return time.perf_counter() - t0, acc


def bench_rollout(impl, mats, n_k, steps, dt):
    rng = np.random.default_rng(1)
    x = np.zeros(n_k)
    y = rng.standard_normal(1)
    t0 = time.perf_counter()
    for _ in range(steps):
        u, x, _, _ = impl.controller_step(*mats, 0, x, y, dt)
        y = 0.95 * y + 0.01 * u  # cheap surrogate plant
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-phi", type=int, default=16)
    ap.add_argument("--reps", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=2010)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    n_k, n_phi, n_y, n_u = 2, args.n_phi, 1, 1
    D = make_layer(rng, n_phi)
    biases = [rng.standard_normal(n_phi) for _ in range(64)]
    mats = [rng.standard_normal(s) * 0.3 for s in
            [(n_k, n_k), (n_k, n_phi), (n_k, n_y), (n_phi, n_k), (n_phi, n_phi),
             (n_phi, n_y), (n_u, n_k), (n_u, n_phi), (n_u, n_y)]]
    mats[4] = D

    impls = [("python", _py)] + ([("compiled", _fast)] if _fast else [])
    print(f"n_phi={n_phi}, {args.reps} fixed points, {args.steps} controller steps")
    print(f"{'backend':10} {'fixed_point':>14} {'rollout':>14}")
    times = {}
    for name, impl in impls:
        t_fp, _ = bench_fixed_point(impl, D, biases, args.reps)
        t_ro = bench_rollout(impl, mats, n_k, args.steps, 0.01)
        times[name] = (t_fp, t_ro)
        print(f"{name:10} {t_fp * 1e3:>11.1f} ms {t_ro * 1e3:>11.1f} ms")
    if _fast:
        fp_speedup = times["python"][0] / times["compiled"][0]
        ro_speedup = times["python"][1] / times["compiled"][1]
        print(f"{'speedup':10} {fp_speedup:>13.1f}x {ro_speedup:>13.1f}x")
        # parity spot check
        w1, r1, _ = _py.fixed_point(biases[0], D, 0)
        w2, r2, _ = _fast.fixed_point(biases[0], D, 0)
        print(f"backend agreement: {np.max(np.abs(w1 - w2)):.2e}")


if __name__ == "__main__":
    main()
