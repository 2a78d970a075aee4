"""Time the compiled and pure-Python integration kernels on the preset runs.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends take identical steps, so the final states are compared
bit-for-bit as a sanity check before timings are reported.
"""

import argparse
import time

import numpy as np

from infoepi import kernels
from infoepi.integrate import integrate_fast, integrate_full, integrate_reduced
from infoepi.presets import PRESETS


def _cases():
    for name, pr in PRESETS.items():
        if pr.mode == "full":
            yield name, lambda b, pr=pr: integrate_full(pr.params, pr.initial, pr.t_end, backend=b)
        else:
            br = pr.branches[-1]
            yield f"{name}/{br}", lambda b, pr=pr, br=br: integrate_reduced(pr.params, br, pr.initial, pr.tau_end,
                                                                          backend=b)
    pr = PRESETS["fig3"]
    yield "fast layer", lambda b: integrate_fast(pr.params, (0.4, 0.3, 0.3), 0.3, 200.0, backend=b)


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if "cython" not in kernels.BACKENDS:
        print("compiled kernel not built; only the Python backend is available")
        return 1
    print(f"{'case':<12} {'steps':>7} {'python [s]':>11} {'cython [s]':>11} {'speedup':>8}")
    for name, run in _cases():
        tp, yp = best_of(lambda: run("python"), args.repeat)
        tc, yc = best_of(lambda: run("cython"), args.repeat)
        assert np.array_equal(yp.y, yc.y), f"backends disagree on {name}"
        print(f"{name:<12} {len(yc.t):>7} {tp:>11.4f} {tc:>11.4f} {tp / tc:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
