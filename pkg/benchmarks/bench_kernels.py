"""Compare the compiled kernels with the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-``repeat`` wall time of each kernel under both
backends and the speed-up. Inputs are identical for both backends.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from apub import _fallback
from apub.instances import make_ev_instance, make_product_mix_instance
from apub.lp import FEAS_TOL, OPT_TOL, PHASE1_OPT_TOL, PIVOT_TOL, iteration_limits
from apub.sampling import RngStream, sample_gamma

try:
    from apub import _core
except ImportError:  # extension not built
    _core = None


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _simplex_args(A):
    m, n = A.shape[-2:]
    bland, cap = iteration_limits(m, n)
    return (PIVOT_TOL, FEAS_TOL, OPT_TOL, PHASE1_OPT_TOL, bland, cap)


def cases():
    rng = RngStream(2024, 0)
    values = sample_gamma(2.0, 1.0, rng, 2000)
    ev = make_ev_instance().draw(rng, 5000)
    x_ev = np.array([8.0, 4.0])
    pm = make_product_mix_instance(20, 8, 0).draw(rng, 120)
    x_pm = np.concatenate([np.full(20, 5.0), np.zeros(20)])
    # one dense LP of moderate size: random feasible bounded standard form
    m, n = 60, 150
    A = np.abs(np.sin(np.arange(m * n).reshape(m, n) * 0.37)) + 0.05
    b = A @ np.linspace(0.5, 1.5, n)
    c = np.cos(np.arange(n) * 0.11) + 1.2

    def batch(sc, x):
        rhs = np.ascontiguousarray(sc.h - sc.T @ x)
        return lambda k: k.simplex_batch(sc.W, rhs, sc.q, *_simplex_args(sc.W))

    return [
        ("fill_uint64 (1e6 words)", lambda k: k.fill_uint64(12345, 0, 1_000_000)),
        ("bootstrap_counts (N=120, M=5000)", lambda k: k.bootstrap_counts(777, 0, 120, 5000)),
        ("bootstrap_means (N=2000, M=1000)", lambda k: k.bootstrap_means(99, 0, values, 1000)),
        ("simplex (60 x 150 dense LP)", lambda k: k.simplex(A, b, c, *_simplex_args(A))),
        ("simplex_batch (5000 EV recourse LPs)", batch(ev, x_ev)),
        ("simplex_batch (120 product-mix recourse LPs)", batch(pm, x_pm)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not built; only the fallback is available")
    print(f"{'kernel':46s} {'compiled [s]':>13s} {'python [s]':>11s} {'speed-up':>9s}")
    for name, fn in cases():
        t_py = _best(lambda: fn(_fallback), args.repeat)
        if _core is None:
            print(f"{name:46s} {'-':>13s} {t_py:11.4f} {'-':>9s}")
            continue
        t_c = _best(lambda: fn(_core), args.repeat)
        print(f"{name:46s} {t_c:13.4f} {t_py:11.4f} {t_py / t_c:8.1f}x")


if __name__ == "__main__":
    main()
