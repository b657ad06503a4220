"""Benchmark the numba kernels against the pure-numpy fallback.

Runs each hot kernel (independent-set enumeration, CSR matvec, drive
application) in this process with the active backend, then re-runs the same
workload in a subprocess with ``BLOCKWALK_NO_NUMBA=1`` and reports the
speedup.

Usage:  python3 benchmarks/bench_kernels.py [--ring N] [--repeat K]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _run_workload(ring: int, repeat: int) -> dict:
    import numpy as np

    from blockwalk import ctqw, kernels, subspace as ss

    results = {"backend": kernels.backend()}

    # warm-up triggers jit compilation so it is not counted below
    basis = ss.enumerate_subspace(ss.ring_graph(ring))
    t0 = time.perf_counter()
    for _ in range(repeat):
        basis = ss.enumerate_subspace(ss.ring_graph(ring))
    results["enumerate_s"] = (time.perf_counter() - t0) / repeat
    results["subspace_size"] = len(basis)

    gen = ctqw.build_generator(basis)
    mat = gen.matrix.tocsr()
    rng = np.random.default_rng(0)
    x = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
    x /= np.linalg.norm(x)
    out = np.empty_like(x)
    # warm-up triggers jit compilation so it is not counted below
    kernels.csr_matvec(mat.indptr, mat.indices, mat.data.astype(complex),
                       x, out)
    t0 = time.perf_counter()
    for _ in range(50 * repeat):
        kernels.csr_matvec(mat.indptr, mat.indices,
                           mat.data.astype(complex), x, out)
    results["csr_matvec_s"] = (time.perf_counter() - t0) / (50 * repeat)

    n_full = min(ring, 16)
    dim = 1 << n_full
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    psi /= np.linalg.norm(psi)
    diag = rng.standard_normal(dim)
    hpsi = np.zeros_like(psi)
    kernels.rydberg_apply(psi, diag, 10.0, 0.3, n_full, hpsi)
    t0 = time.perf_counter()
    for _ in range(20 * repeat):
        kernels.rydberg_apply(psi, diag, 10.0, 0.3, n_full, hpsi)
    results["rydberg_apply_s"] = (time.perf_counter() - t0) / (20 * repeat)
    return results


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ring", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--_inner", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args._inner:
        print(json.dumps(_run_workload(args.ring, args.repeat)))
        return 0

    fast = _run_workload(args.ring, args.repeat)
    env = dict(os.environ, BLOCKWALK_NO_NUMBA="1")
    proc = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--_inner",
         "--ring", str(args.ring), "--repeat", str(args.repeat)],
        env=env, capture_output=True, text=True, check=True)
    slow = json.loads(proc.stdout.strip().splitlines()[-1])

    print(f"ring N={args.ring} (|V|={fast['subspace_size']}), "
          f"{fast['backend']} vs {slow['backend']}")
    for key in ("enumerate_s", "csr_matvec_s", "rydberg_apply_s"):
        name = key[:-2]
        ratio = slow[key] / fast[key] if fast[key] > 0 else float("inf")
        print(f"  {name:14s} {fast['backend']}: {fast[key]:.3e} s   "
              f"{slow['backend']}: {slow[key]:.3e} s   "
              f"speedup x{ratio:.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
