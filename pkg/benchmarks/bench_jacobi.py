"""Time the compiled Jacobi eigensolver against the numpy fallback.

Usage: ``python benchmarks/bench_jacobi.py [--sizes 16,32,64,100] [--repeats 3]``
"""

import argparse
import timeit

import numpy as np

from wips import _jacobi_py
from wips.numerics import OFF_DIAGONAL_TOL, MAX_SWEEPS, make_rng

try:
    from wips import _jacobi_ext
except ImportError:
    _jacobi_ext = None


def _matrix(n: int) -> np.ndarray:
    a = make_rng(n).normal(size=(n, n))
    return a + a.T


def _time(solver, h, repeats: int) -> float:
    tol = OFF_DIAGONAL_TOL * np.linalg.norm(h)
    # each call diagonalizes in place, so hand it a fresh copy
    return min(timeit.repeat(lambda: solver(h.copy(), tol, MAX_SWEEPS), number=1, repeat=repeats))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="16,32,64,100")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    if _jacobi_ext is None:
        print("compiled extension not built; timing the fallback only")
    print("n\tpython_s\tcython_s\tspeedup")
    for n in (int(s) for s in args.sizes.split(",")):
        h = _matrix(n)
        py = _time(_jacobi_py.jacobi_eigh, h, args.repeats)
        if _jacobi_ext is None:
            print(f"{n}\t{py:.4f}\t-\t-")
            continue
        cy = _time(_jacobi_ext.jacobi_eigh, h, args.repeats)
        w_py = np.sort(_jacobi_py.jacobi_eigh(h.copy(), OFF_DIAGONAL_TOL * np.linalg.norm(h), MAX_SWEEPS)[0])
        w_cy = np.sort(_jacobi_ext.jacobi_eigh(h.copy(), OFF_DIAGONAL_TOL * np.linalg.norm(h), MAX_SWEEPS)[0])
        assert np.allclose(w_py, w_cy, atol=1e-9 * np.abs(w_py).max())
        print(f"{n}\t{py:.4f}\t{cy:.4f}\t{py / cy:.0f}x")


if __name__ == "__main__":
    main()
