#!/usr/bin/env python3
"""Benchmark the compiled kernel against the pure-numpy fallback.

Runs the two-level paper setup for a small batch of trajectories on both
kernels, reports per-trajectory wall time and the speedup, and verifies the
two agree on the recorded amplitudes.

Usage: python benchmarks/bench_kernels.py [--n-traj 64] [--t-final 2.0]
"""

import argparse
import math
import time

import numpy as np

from ehrenfestdb import scenario_build
from ehrenfestdb._kernels import available_kernels
from ehrenfestdb.ehrenfest import assemble_propagation_inputs
from ehrenfestdb.ensemble import _sample_chunk


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-traj", type=int, default=64)
    ap.add_argument("--t-final", type=float, default=2.0)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    system, baths, cfg = scenario_build("two_level_paper",
                                        n_traj=args.n_traj)
    inputs = assemble_propagation_inputs(system, baths, cfg.step)
    n_steps = int(round(args.t_final / cfg.step.dt))
    rec = np.arange(0, n_steps + 1, max(1, n_steps // 100), dtype=np.int64)
    q0, p0 = _sample_chunk(cfg.base_seed, 0, 0, args.n_traj, cfg.sampling,
                           inputs["baths"], inputs["res_offsets"])
    psi0 = np.zeros((args.n_traj, system.n_levels), dtype=complex)
    psi0[:, 0] = 1.0

    kernels = available_kernels()
    print(f"{args.n_traj} trajectories x {n_steps} steps "
          f"({baths[0].n_modes} modes); kernels: {sorted(kernels)}")
    results, timings = {}, {}
    for name, kern in kernels.items():
        best = math.inf
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            out = kern.propagate_batch(
                psi0, inputs["h0"], inputs["m_mats"], inputs["v_mats"],
                inputs["omegas"], inputs["gs"], inputs["res_index"],
                inputs["res_offsets"], q0, p0, cfg.step.dt, n_steps, rec,
                True, math.inf)
            best = min(best, time.perf_counter() - t0)
        results[name] = out
        timings[name] = best
        per_traj = best / args.n_traj * 1e3
        per_step = best / (args.n_traj * n_steps) * 1e6
        print(f"  {name:>7}: {best:8.3f} s  "
              f"({per_traj:7.2f} ms/traj, {per_step:6.2f} us/traj-step)")

    if len(results) == 2:
        a, b = results["python"], results["cython"]
        dev = np.nanmax(np.abs(a[0] - b[0]))
        print(f"max |psi_python - psi_cython| over records: {dev:.3e}")
        print(f"speedup cython vs python: "
              f"{timings['python'] / timings['cython']:.2f}x")


if __name__ == "__main__":
    main()
