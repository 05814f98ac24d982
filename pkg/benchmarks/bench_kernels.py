"""Compare the compiled and numpy backends of generator assembly.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--sigma-e VALUE]
"""

import argparse
import statistics
import time

import numpy as np

from cvgibbs import kernels
from cvgibbs.filters import metropolis
from cvgibbs.fock import build_basis
from cvgibbs.hamiltonians import (
    AubryAndreParams,
    BoseHubbardParams,
    MeanFieldParams,
    build_aubry_andre,
    build_mean_field,
    build_superfluid_truncation,
    square_lattice,
)
from cvgibbs.lindblad import build_generator, ladder_jumps


def cases():
    bh = BoseHubbardParams(0.2, 1.0, eta=1.5, eta_prime=1.0)
    yield "mean-field M=12", build_mean_field(MeanFieldParams(0.0, 2.0, 0.05), build_basis(1, 12))
    yield "mean-field M=24", build_mean_field(MeanFieldParams(0.0, 2.0, 0.05), build_basis(1, 24))
    basis = build_basis(2, 5, total_cutoff=5)
    yield "superfluid L=2 N=5", build_superfluid_truncation(square_lattice(1, 2), bh, 3, basis)
    basis = build_basis(4, 3, total_cutoff=3)
    yield "aubry-andre L=2 N=3", build_aubry_andre(AubryAndreParams(0.1, 1, 2), basis).hamiltonian


def time_backend(name, h, sigma, repeat):
    kernels.use_backend(name)
    jumps = ladder_jumps(h.basis)
    filt = metropolis(1.0)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        gen = build_generator(h, jumps, filt, sigma_E=sigma)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), gen.matrix


def time_kernel(name, d, mode, repeat, fill=1.0, seed=0):
    rng = np.random.default_rng(seed)
    lg = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    lg[rng.random((d, d)) >= fill] = 0
    e = np.sort(rng.normal(size=d))
    omega = np.ascontiguousarray(e[:, None] - e[None, :])
    fn = kernels._compiled if name == "cython" else kernels._kernels_py.weighted_kron_accumulate
    times = []
    for _ in range(repeat):
        out = np.zeros((d * d, d * d), dtype=complex)
        t0 = time.perf_counter()
        fn(out, lg, omega, mode, 0.5)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--sigma-e", type=float, default=1.0, help="energy width; use inf for the dressed limit")
    args = parser.parse_args()
    if kernels._compiled is None:
        raise SystemExit("compiled kernel not built; reinstall with pip install -e . --no-build-isolation")
    saved = kernels.BACKEND
    print(f"{'case':<22}{'dim':>6}{'cython s':>12}{'python s':>12}{'speedup':>10}{'max diff':>12}")
    try:
        for label, h in cases():
            tc, mc = time_backend("cython", h, args.sigma_e, args.repeat)
            tp, mp = time_backend("python", h, args.sigma_e, args.repeat)
            diff = float(np.abs(mc - mp).max())
            print(f"{label:<22}{h.basis.dim:>6}{tc:>12.4f}{tp:>12.4f}{tp / tc:>10.2f}{diff:>12.1e}")
    finally:
        kernels.use_backend(saved)
    print()
    print(f"{'kernel only':<22}{'d':>6}{'cython s':>12}{'python s':>12}{'speedup':>10}{'max diff':>12}")
    mode = kernels.WEIGHT_ONE if np.isinf(args.sigma_e) else kernels.WEIGHT_GAUSSIAN
    for fill in (1.0, 0.1):
        for d in (15, 25, 35):
            tc, oc = time_kernel("cython", d, mode, args.repeat, fill)
            tp, op = time_kernel("python", d, mode, args.repeat, fill)
            diff = float(np.abs(oc - op).max())
            label = f"random jump fill={fill:g}"
            print(f"{label:<22}{d:>6}{tc:>12.4f}{tp:>12.4f}{tp / tc:>10.2f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
