"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import math
import timeit

import numpy as np

from bsderep import _fallback, kernels


def _cases(mod):
    n, steps, d = 100_000, 64, 1
    inc = np.ascontiguousarray(
        _fallback.normal_block(1, 0, n, steps * d).reshape(n, steps, d) * math.sqrt(0.125 / steps))
    phi2 = np.full((n, steps), 1.19)
    x = np.linspace(-1.0, 1.0, 201)  # dx^2 / ds = 2 keeps the explicit march stable
    barrier = np.linspace(1.0, 0.9, 2001)
    return {
        "normal_block 1e5 x 64": lambda: mod.normal_block(3, 0, n, steps * d),
        "first_passage 1e5 x 64": lambda: mod.first_passage(inc, phi2, 0.125 / steps),
        "pde_march 201 x 2000 cubic": lambda: mod.pde_march(
            1.0 + 0.2 * x, x, 5e-5, 0.1, 2000, barrier, 1.0, 0.2, 0.0, _fallback.FAMILY_CUBIC,
            (0.5, 0.0, 0.0, 0.0), 100),
    }


def run(repeat):
    backends = {"python": _fallback}
    try:
        backends["cython"] = kernels.backend_module("cython")
    except ImportError:
        pass
    results = {}
    for name, mod in backends.items():
        for label, fn in _cases(mod).items():
            fn()  # warm up
            best = min(timeit.repeat(fn, number=1, repeat=repeat))
            results.setdefault(label, {})[name] = best
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args()
    results = run(args.repeat)
    print(f"{'kernel':32s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}")
    for label, times in results.items():
        py, cy = times["python"], times.get("cython", float("nan"))
        print(f"{label:32s} {py:11.4f} {cy:11.4f} {py / cy:8.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
