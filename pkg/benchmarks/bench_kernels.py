"""Compiled vs pure-Python stopping-time kernels.

    python3 benchmarks/bench_kernels.py [--N 4096] [--repeat 5]

Times ``hold`` (one level) and ``hold_levels`` (20 dyadic levels, the
work inside ``ito_limsup``) on a Brownian integrand, checks that both
backends return bitwise-identical arrays, and prints the speed-up.
"""
import argparse
import timeit

import numpy as np

from qspatch import _pykernels

try:
    from qspatch import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=4096, help="grid steps")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    eta = np.concatenate([[0.0], np.cumsum(rng.standard_normal(args.N) / np.sqrt(args.N))])
    levels = np.ldexp(1.0, -np.arange(1, 21))
    cases = {
        "hold(eps=2^-10)": lambda k: k.hold(eta, 2.0**-10),
        "hold_levels(20)": lambda k: k.hold_levels(eta, levels),
    }
    if _ckernels is None:
        print("compiled extension not built; only the pure-Python backend is available")
    print(f"N={args.N}, best of {args.repeat}")
    print(f"{'kernel':<18}{'python [ms]':>14}{'compiled [ms]':>16}{'speed-up':>10}")
    for name, fn in cases.items():
        t_py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:<18}{t_py:>14.3f}{'-':>16}{'-':>10}")
            continue
        a, b = fn(_pykernels), fn(_ckernels)
        a, b = (a if isinstance(a, tuple) else (a,)), (b if isinstance(b, tuple) else (b,))
        assert all(np.array_equal(x, y) for x, y in zip(a, b)), f"{name}: backends disagree"
        t_c = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<18}{t_py:>14.3f}{t_c:>16.3f}{t_py / t_c:>9.0f}x")


if __name__ == "__main__":
    main()
