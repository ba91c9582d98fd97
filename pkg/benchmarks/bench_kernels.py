"""Compare the compiled and pure-Python thinning backends.

Usage: python3 benchmarks/bench_kernels.py [--size 1024] [--repeat 3]
"""
import argparse
import time

import numpy as np

from vesselmorph import kernels
from vesselmorph.skeleton import thin
from vesselmorph.synth import default_spec, generate


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def workloads(size, seed):
    rng = np.random.default_rng(seed)
    rec, _ = generate(default_spec(seed), "bench")
    yy, xx = np.mgrid[:size, :size]
    blobs = np.zeros((size, size), dtype=bool)
    for _ in range(40):
        cx, cy, r = rng.uniform(0, size), rng.uniform(0, size), rng.uniform(10, size / 10)
        blobs |= (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    return {"synthetic artery mask": rec.artery_mask, "synthetic vein mask": rec.vein_mask, "random disks": blobs}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=1024)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if kernels.thin_c is None:
        print("compiled backend not built; only the pure-Python timing is shown")
    print(f"{'workload':24s} {'pixels':>9s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s} {'same':>5s}")
    for name, mask in workloads(args.size, args.seed).items():
        tp, sp = _time(lambda: thin(mask, backend="python"), 1)
        if kernels.thin_c is not None:
            tc, sc = _time(lambda: thin(mask, backend="cython"), args.repeat)
            same = bool(np.array_equal(sp.image, sc.image))
            print(f"{name:24s} {int(mask.sum()):9d} {tp:10.3f} {tc:10.4f} {tp / tc:8.1f} {str(same):>5s}")
        else:
            print(f"{name:24s} {int(mask.sum()):9d} {tp:10.3f} {'-':>10s} {'-':>8s} {'-':>5s}")


if __name__ == "__main__":
    main()
