"""
Benchmark: LDL inertia counting vs stochastic Chebyshev DOS.

Builds one disordered Hamiltonian per size at half filling, times both
DOS estimators, and reports the largest per-bin deviation of the
Chebyshev histogram from the exact inertia counts.

Usage:
    python scripts/benchmark_dos.py [--sizes 8 10 12] [--bins 100]
"""

import argparse
import sys
import time

import numpy as np

from bosechain.basis import enumerate_sector
from bosechain.dos import ChebyshevConfig, DosMethod, dos_histogram
from bosechain.model import DisorderModel, ModelParams, build_hamiltonian, sample_disorder
from bosechain.spectral import extremal_eigenvalues


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--sizes", type=int, nargs="+", default=[8, 10, 12])
    parser.add_argument("--bins", type=int, default=100)
    parser.add_argument("--U", type=float, default=3.5)
    parser.add_argument("--W", type=float, default=10.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    cfg = ChebyshevConfig(p=50, n_v=30, seed=args.seed)

    print("DOS estimators: LDL inertia vs Chebyshev")
    print("========================================")
    print()
    print("| L  | dim     | LDL [s]  | Chebyshev [s] | max |Δcount| / dim |")
    print("|----|---------|----------|---------------|--------------------|")
    for L in args.sizes:
        params = ModelParams(L=L, U=args.U)
        sector = enumerate_sector(L, L // 2)
        disorder = sample_disorder(DisorderModel(W=args.W), L, args.seed, params)
        H = build_hamiltonian(params, disorder, sector)
        bounds = extremal_eigenvalues(H)

        start = time.perf_counter()
        exact = dos_histogram(H, args.bins, DosMethod.ldl, bounds=bounds)
        t_ldl = time.perf_counter() - start

        start = time.perf_counter()
        approx = dos_histogram(H, args.bins, DosMethod.chebyshev, cfg, bounds=bounds)
        t_cheb = time.perf_counter() - start

        deviation = float(np.max(np.abs(approx.counts - exact.counts))) / sector.dim
        print(f"| {L:<2} | {sector.dim:<7} | {t_ldl:<8.3f} | {t_cheb:<13.3f} | {deviation:<18.2e} |")

    return 0


if __name__ == "__main__":
    sys.exit(main())
