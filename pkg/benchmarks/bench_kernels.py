"""Time the hot kernels with numba and with the pure-numpy fallback.

Each backend runs in its own interpreter because ``PREINT_DISABLE_JIT`` is
read at import time::

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

CASES = ("sobol 65536x256", "inverse normal 2^22", "roots 16384x256", "fst matvec 16384x256")


def _time_cases(repeat):
    from preintqmc import _accel, _kernels
    from preintqmc.brownian import TimeGrid, factorize
    from preintqmc.lowdisc import SobolSampler
    from preintqmc.payoff import MarketParams, make_digital_asian

    sampler = SobolSampler(256, "linear-affine", seed=1)
    u = np.random.default_rng(0).random(2**22)
    g = make_digital_asian(MarketParams(), factorize(TimeGrid(256), "pca"))
    y = np.random.default_rng(1).standard_normal((2**14, 255))
    x = np.random.default_rng(2).standard_normal((2**14, 256))
    funcs = {
        CASES[0]: lambda: sampler.points(0, 2**16),
        CASES[1]: lambda: _kernels.norm_ppf(u),
        CASES[2]: lambda: g.roots(y),
        CASES[3]: lambda: g.fact.matvec(x),
    }
    out = {}
    for name, fn in funcs.items():
        fn()  # warm-up, includes JIT compilation
        out[name] = min(timeit.repeat(fn, number=1, repeat=repeat))
    return {"numba": _accel.USE_NUMBA, "times": out}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.child:
        print(json.dumps(_time_cases(args.repeat)))
        return

    results = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, PREINT_DISABLE_JIT=flag)
        proc = subprocess.run(
            [sys.executable, __file__, "--child", "--repeat", str(args.repeat)],
            env=env, check=True, capture_output=True, text=True,
        )
        results[label] = json.loads(proc.stdout.strip().splitlines()[-1])["times"]

    print(f"{'kernel':24s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for name in CASES:
        a, b = results["numba"][name], results["numpy"][name]
        print(f"{name:24s} {a:10.4f} {b:10.4f} {b / a:8.1f}")


if __name__ == "__main__":
    main()
