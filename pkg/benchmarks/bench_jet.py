"""Compiled versus numpy jet kernels.

Times the truncated product kernel directly for several ``(n, k)`` and, in a
child process per backend, the order-``k`` time-one map jet of a planar
focus (the dominant cost of building a factor).

    python benchmarks/bench_jet.py [--repeat 5]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from koopfactor import _backend
from koopfactor.multiindex import table

END_TO_END = """
import time
from koopfactor import _backend
from koopfactor.flow import FlowHandle, time_one_map_jet
from koopfactor.parser import parse_field
h = FlowHandle(parse_field("[-x1 - 2*x2 + x1*x2, 2*x1 - x2 - x1^2]"))
t0 = time.perf_counter()
time_one_map_jet(h, [0.0, 0.0], {k})
print(_backend.NAME, time.perf_counter() - t0)
"""


def kernel_times(repeat):
    impls = _backend.implementations()
    rng = np.random.default_rng(0)
    rows = []
    for n, k in [(1, 8), (2, 6), (2, 10), (3, 6), (4, 6)]:
        t = table(n, k)
        a, b = rng.standard_normal(t.size), rng.standard_normal(t.size)
        out = np.empty(t.size)
        res = {}
        for name, mod in impls.items():
            call = lambda: mod.mul_into(a, b, t.mul_a, t.mul_b, t.mul_c, out)  # noqa: E731
            number = max(1, int(2e4 // max(1, t.mul_a.size // 10)))
            res[name] = min(timeit.repeat(call, number=number, repeat=repeat)) / number
        rows.append((n, k, t.size, res))
    return rows


def end_to_end(k):
    out = {}
    for name, env in (("python", "1"), ("cython", "0")):
        if name == "cython" and not _backend.compiled_available():
            continue
        proc = subprocess.run([sys.executable, "-c", END_TO_END.format(k=k)], capture_output=True,
                              text=True, env={**os.environ, "KF_PURE_PYTHON": env}, check=True)
        got, secs = proc.stdout.split()
        out[got] = float(secs)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--k", type=int, default=6, help="order of the end-to-end jet")
    args = ap.parse_args()
    rows = kernel_times(args.repeat)
    names = sorted({nm for *_, r in rows for nm in r})
    print("product kernel, seconds per call")
    print(f"{'n':>2} {'k':>3} {'size':>5} " + " ".join(f"{nm:>12}" for nm in names) + "  speedup")
    for n, k, size, r in rows:
        sp = r["python"] / r["cython"] if "cython" in r else float("nan")
        print(f"{n:>2} {k:>3} {size:>5} " + " ".join(f"{r[nm]:>12.3e}" for nm in names) + f"  {sp:7.1f}")
    e = end_to_end(args.k)
    print(f"\ntime-one map jet of the focus at k = {args.k}, seconds")
    for nm, s in e.items():
        print(f"  {nm:>7}: {s:.3f}")
    if len(e) == 2:
        print(f"  speedup: {e['python'] / e['cython']:.1f}")


if __name__ == "__main__":
    main()
