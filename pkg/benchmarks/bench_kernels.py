#!/usr/bin/env python3
"""Benchmark the compiled rollout kernel against the pure-numpy fallback.

The rollout dominates Gramian assembly (hundreds of perturbation
trajectories) and SR-UKF Monte-Carlo batches (sigma-point propagation every
frame), so these workloads mirror the package's two hot paths.

Usage: python benchmarks/bench_kernels.py [--repeats 5]
"""
import argparse
import time

import numpy as np

from pmuplace import backend
from pmuplace.cases import load_wscc9, synthetic_ring_case
from pmuplace.gramian import GramianConfig, per_generator_bank
from pmuplace.network import init_steady_state, solve_power_flow


def model_for(case, order):
    pf = solve_power_flow(case)
    return init_steady_state(case, pf, order)


def time_call(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workloads():
    wscc = load_wscc9()
    m1 = model_for(wscc, "second")
    m2 = model_for(wscc, "fourth")
    big = model_for(synthetic_ring_case(20, seed=2025), "second")
    rng = np.random.default_rng(0)

    def batch(model, b):
        return model.x0[None, :] + 0.05 * rng.standard_normal((b, model.n))

    x_m1 = batch(m1, 8 * m1.n)      # gramian batch: 2 dirs x 4 sizes x n
    x_m2 = batch(m2, 8 * m2.n)
    x_big = batch(big, 8 * big.n)
    x_sigma = batch(m1, 2 * m1.n + 1)

    yield "wscc gramian batch, M1 (48 traj x 150 steps, n=6)", m1, x_m1, 150
    yield "wscc gramian batch, M2 (96 traj x 150 steps, n=12)", m2, x_m2, 150
    yield "20-machine gramian batch, M1 (320 traj x 150, n=40)", big, x_big, 150
    yield "sigma-point step, M1 (13 traj x 1 step x 150 calls)", m1, x_sigma, 1


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    have_compiled = True
    try:
        backend.rollout_compiled(
            model_for(load_wscc9(), "second"),
            np.zeros((1, 6)) + model_for(load_wscc9(), "second").x0,
            1.0 / 30.0,
            1,
        )
    except ImportError:
        have_compiled = False

    print(f"active backend: {backend.active_backend()}")
    header = f"{'workload':<55} {'python':>10} {'compiled':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, model, x0, n_steps in workloads():
        calls = 150 if n_steps == 1 else 1

        def run_py():
            for _ in range(calls):
                backend.rollout_python(model, x0, 1.0 / 30.0, n_steps)

        t_py = time_call(run_py, args.repeats)
        if have_compiled:

            def run_c():
                for _ in range(calls):
                    backend.rollout_compiled(model, x0, 1.0 / 30.0, n_steps)

            t_c = time_call(run_c, args.repeats)
            print(f"{name:<55} {1e3*t_py:>8.2f}ms {1e3*t_c:>8.2f}ms {t_py/t_c:>7.1f}x")
        else:
            print(f"{name:<55} {1e3*t_py:>8.2f}ms {'n/a':>10} {'':>8}")

    # end-to-end: full per-generator bank on the WSCC fixture
    wscc = load_wscc9()
    m1 = model_for(wscc, "second")
    cfg = GramianConfig()
    t_bank = time_call(lambda: per_generator_bank(m1, cfg), args.repeats)
    print(f"\nfull WSCC M1 gramian bank ({backend.active_backend()} backend): "
          f"{1e3*t_bank:.1f} ms")


if __name__ == "__main__":
    main()
