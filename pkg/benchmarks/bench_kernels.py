"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints best-of-N wall time per kernel and backend, and the speedup.
"""
import argparse
import timeit

import numpy as np

from kamkit import _fallback, kernels
from kamkit.decay import _bounds
from kamkit.foundations import Lattice
from kamkit.oscillator import build_basis, coupling, quadrature


def cases():
    rng = np.random.default_rng(0)
    lat = Lattice(12, 2, [(2, 1)])
    b, _ = _bounds(lat)
    M = rng.standard_normal((lat.dim, lat.dim))
    yield "block_opnorms J=12 d=2", (M, b), "block_opnorms"
    lat = Lattice(24, 2)
    b, _ = _bounds(lat)
    M = rng.standard_normal((lat.dim, lat.dim))
    yield "block_opnorms J=24 d=2", (M, b), "block_opnorms"
    basis = build_basis(2, 8)
    ct = coupling(basis, 1)
    X, W = quadrature(2, ct.quad_order, 2.0)
    psi = basis.eval(X)
    yield "coupling_sum J=8 p=1", (psi, W, ct.tuples.astype(np.int64)), "coupling_sum"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print("backend at import: %s" % kernels.backend())
    print("%-26s %12s %12s %8s" % ("case", "compiled s", "numpy s", "speedup"))
    for name, inputs, fn in cases():
        fast = getattr(kernels, fn)
        slow = getattr(_fallback, fn)
        a, c = fast(*inputs), slow(*inputs)
        err = float(np.abs(a - c).max() / max(np.abs(c).max(), 1e-300))
        tf = min(timeit.repeat(lambda: fast(*inputs), number=1, repeat=args.repeat))
        ts = min(timeit.repeat(lambda: slow(*inputs), number=1, repeat=args.repeat))
        print("%-26s %12.5f %12.5f %7.1fx   max rel diff %.1e" % (name, tf, ts, ts / tf, err))


if __name__ == "__main__":
    main()
