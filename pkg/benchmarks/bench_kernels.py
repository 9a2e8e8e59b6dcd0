"""Time the numba and numpy paths of the bulk kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both paths are called directly, so the environment flag does not matter.
Numba's first call compiles; it is excluded from the timings.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from seebench import _accel


def cases(rng: np.random.Generator):
    codes = rng.integers(-1, 3, size=(5056, 3)).astype(np.int8)
    yield "edit_distance 64x5056", (_accel.edit_distance_matrix_numpy, _accel.edit_distance_matrix_numba), (codes[:64], codes)
    yield "edit_distance 5056x5056", (_accel.edit_distance_matrix_numpy, _accel.edit_distance_matrix_numba), (codes, codes)
    grids = rng.random((20224, 64))
    yield "spread 20224x(8x8)", (_accel.spread_rows_numpy, _accel.spread_rows_numba), (grids,)
    grids = rng.random((2048, 4096))
    yield "spread 2048x(64x64)", (_accel.spread_rows_numpy, _accel.spread_rows_numba), (grids,)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"numba available: {_accel.njit is not None}")
    print(f"{'kernel':<26}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, (np_fn, nb_fn), argv in cases(rng):
        nb_fn(*argv)  # compile
        ref, got = np_fn(*argv), nb_fn(*argv)
        assert np.allclose(ref, got, atol=1e-12), name
        t_np = min(timeit.repeat(lambda: np_fn(*argv), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: nb_fn(*argv), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<26}{t_np:>12.2f}{t_nb:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
