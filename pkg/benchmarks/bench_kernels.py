"""Compare the numba and numpy kernel backends.

Both implementations live in prethermal._kernels; this calls them directly so
one process can time both. Also times a research-mode normal-form step in a
subprocess per backend, since the backend is fixed at import.

    python3 benchmarks/bench_kernels.py
"""
import os
import subprocess
import sys
import time

import numpy as np

from prethermal import _kernels


def bench(fn, *args, warmup=1, repeat=5):
    for _ in range(warmup):
        fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def site_transform_case(k, rng):
    vec = rng.standard_normal(4**k) + 1j * rng.standard_normal(4**k)
    return vec, _kernels.LETTER_TO_ELEM, k


def scatter_case(k, n, rng):
    block = rng.standard_normal((2**k, 2**k)) + 0j
    spread, base = _kernels.index_maps(tuple(range(1, k + 1)), n)
    out = np.zeros((2**n, 2**n), dtype=np.complex128)
    return out, block, spread, base


STEP_SCRIPT = """
import time
from prethermal import ising, kappa_norm
from prethermal.normal_form import NormalFormParams, run
m = ising(8)
p = NormalFormParams.build(1.0, 0.05, kappa_norm(m.P, 1.0), n_star=2)
t0 = time.perf_counter()
run(m.number, m.P, p)
print(time.perf_counter() - t0)
"""


def end_to_end(backend):
    env = dict(os.environ, PRETHERMAL_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", STEP_SCRIPT], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    if not _kernels.HAVE_NUMBA:
        print("numba not installed; only the numpy backend is available")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numpy (s)':>12}{'numba (s)':>12}{'speedup':>10}")
    for k in (4, 6, 8):
        args = site_transform_case(k, rng)
        t_np = bench(_kernels._site_transform_numpy, *args)
        t_nb = bench(_kernels._site_transform_numba, *args)
        print(f"{'site_transform k=' + str(k):<28}{t_np:>12.6f}{t_nb:>12.6f}{t_np / t_nb:>10.1f}")
    for k, n in ((2, 8), (4, 10), (6, 12)):
        args = scatter_case(k, n, rng)
        t_np = bench(_kernels._scatter_add_numpy, *args)
        t_nb = bench(_kernels._scatter_add_numba, *args)
        print(f"{f'scatter_add k={k} n={n}':<28}{t_np:>12.6f}{t_nb:>12.6f}{t_np / t_nb:>10.1f}")
    t_np, t_nb = end_to_end("numpy"), end_to_end("numba")
    print(f"{'normal form L=8 n*=2':<28}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
