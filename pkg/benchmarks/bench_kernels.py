"""Throughput of the compiled and numpy trajectory kernels.

Usage::

    python3 benchmarks/bench_kernels.py --L 2 5 11 21 --batch 64 --steps 500
"""
from __future__ import annotations

import argparse
import math
import time

import numpy as np

from monitored_chain import kernel
from monitored_chain.core import build_hamiltonian, build_propagator, init_localized


def time_backend(backend, L, batch, steps, repeats, k=1.0, eta=0.5, dt=1e-3, seed=0):
    """Best wall time per trajectory step in nanoseconds."""
    rng = np.random.default_rng(seed)
    U = build_propagator(build_hamiltonian(L), dt)
    dW = rng.standard_normal((batch, steps, L)) * math.sqrt(dt)
    best = math.inf
    for _ in range(repeats):
        states = np.repeat(init_localized(L, (L + 1) // 2)[None], batch, axis=0)
        t0 = time.perf_counter()
        kernel.advance(states, U, k, eta, dt, dW, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best / (batch * steps) * 1e9, states


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=int, nargs="+", default=[2, 5, 11, 21])
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    backends = ["python"] + (["compiled"] if kernel._compiled is not None else [])
    if len(backends) == 1:
        print("compiled kernel not built; timing the numpy fallback only")
    print(f"{'L':>4} " + " ".join(f"{b + ' ns/step':>18}" for b in backends) + f" {'speedup':>8} {'max diff':>9}")
    for L in args.L:
        times, finals = [], []
        for b in backends:
            t, s = time_backend(b, L, args.batch, args.steps, args.repeats)
            times.append(t)
            finals.append(s)
        speed = times[0] / times[-1]
        diff = np.max(np.abs(finals[0] - finals[-1]))
        print(f"{L:>4} " + " ".join(f"{t:>18.0f}" for t in times) + f" {speed:>8.2f} {diff:>9.1e}")


if __name__ == "__main__":
    main()
