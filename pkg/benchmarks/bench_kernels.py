"""Compare the numba and numpy banded kernels, and a full state draw under each
backend (selected per process through NCBSTS_DISABLE_NUMBA).

    python benchmarks/bench_kernels.py [--sizes 150 600 2400] [--repeat 20]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from ncbsts import _kernels
from ncbsts._jit import HAVE_NUMBA
from ncbsts.statespace import _prior_band

STATE_DRAW = """
import json, sys, timeit
import numpy as np
from ncbsts._jit import backend
from ncbsts.statespace import ThetaParams, sample_states
T, repeat = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
y = rng.normal(size=T).cumsum()
theta = ThetaParams(0.1, 0.01, 0.5, 0.1)
sample_states(y, theta, 1.0, rng)
t = min(timeit.repeat(lambda: sample_states(y, theta, 1.0, rng), number=5, repeat=repeat)) / 5
print(json.dumps({"backend": backend(), "seconds": t}))
"""


def precision_band(T):
    ab = _prior_band(T).copy()
    ab[0] += 1.0
    return np.ascontiguousarray(ab)


def time_kernels(T, repeat):
    ab = precision_band(T)
    b = np.random.default_rng(0).normal(size=(2 * T, 1))
    rows = []
    for name, kernels in (("numba", _kernels.NUMBA_KERNELS), ("numpy", _kernels.NUMPY_KERNELS)):
        if name == "numba" and not HAVE_NUMBA:
            continue
        lb, info = kernels["cholesky"](ab.copy())
        assert info == -1
        kernels["forward"](lb, b)  # compile
        kernels["backward"](lb, b)
        for op, fn in (
            ("cholesky", lambda: kernels["cholesky"](ab.copy())),
            ("forward", lambda: kernels["forward"](lb, b)),
            ("backward", lambda: kernels["backward"](lb, b)),
        ):
            t = min(timeit.repeat(fn, number=5, repeat=repeat)) / 5
            rows.append((T, name, op, t))
    return rows


def time_state_draw(T, repeat, disable):
    env = dict(os.environ, NCBSTS_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", STATE_DRAW, str(T), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[150, 600, 2400])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    print(f"{'T':>6} {'backend':>8} {'kernel':>10} {'ms':>10}")
    for T in args.sizes:
        for T_, name, op, t in time_kernels(T, args.repeat):
            print(f"{T_:>6} {name:>8} {op:>10} {1e3 * t:>10.3f}")
    print()
    print(f"{'T':>6} {'backend':>8} {'state draw ms':>14} {'speed-up':>9}")
    for T in args.sizes:
        res = [time_state_draw(T, args.repeat, disable) for disable in (False, True)]
        base = res[1]["seconds"]
        for r in res:
            print(f"{T:>6} {r['backend']:>8} {1e3 * r['seconds']:>14.3f} {base / r['seconds']:>9.1f}")


if __name__ == "__main__":
    main()
