"""Time observation building with the compiled and the pure-Python kernels.

    python benchmarks/bench_kernels.py [--events N] [--actors N] [--repeat R]

Both backends must produce identical matrices; the script checks that before
reporting timings.
"""
import argparse
import time

import numpy as np

from rhem import kernels
from rhem.gof import generate_clustered
from rhem.outcome import normalize
from rhem.sampling import build_observations
from rhem.statistics import DEFAULT_CATALOG, parse_catalog


def run(store, catalog, backend, m):
    t = time.perf_counter()
    obs = build_observations(store, catalog, m=m, seed=0, backend=backend)
    return time.perf_counter() - t, obs


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--events", type=int, default=2000)
    ap.add_argument("--actors", type=int, default=500)
    ap.add_argument("--controls", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=2)
    ap.add_argument("--catalog", default=DEFAULT_CATALOG)
    args = ap.parse_args()

    store = normalize(generate_clustered(args.events, args.actors, rng=np.random.default_rng(0)))
    catalog = parse_catalog(args.catalog)
    backends = sorted(kernels.available_backends())
    print(f"{args.events} events, {args.actors} actors, m={args.controls}, catalog: {catalog.names}")
    best, ref = {}, None
    for b in backends:
        times = []
        for _ in range(args.repeat):
            dt, obs = run(store, catalog, b, args.controls)
            times.append(dt)
        if ref is None:
            ref = obs
        elif not np.array_equal(ref.values, obs.values):
            raise SystemExit(f"backend {b} disagrees with {backends[0]}")
        best[b] = min(times)
        print(f"{b:8s} best of {args.repeat}: {best[b]:8.3f}s  ({len(obs)} rows)")
    if len(best) == 2:
        print(f"speedup cython/python: {best['python'] / best['cython']:.2f}x")


if __name__ == "__main__":
    main()
