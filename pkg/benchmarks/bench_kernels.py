"""Time each hot kernel on its numba and numpy paths.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N wall time of both paths and
the speedup, after checking that the two paths agree exactly.
"""
import argparse
import timeit

import numpy as np

from phocconf import _kernels
from phocconf.phoc import PhocConfig


def phoc_case(rng):
    cfg = PhocConfig()
    words = [rng.integers(0, 36, rng.integers(2, 12)) for _ in range(500)]
    levels = np.array(cfg.levels, dtype=np.int64)

    def run(fn):
        return [fn(w, levels, 36, cfg.overlap_threshold) for w in words]
    return "phoc_bits (500 words)", run


def sweep_case(rng):
    rel = rng.random((50, 1000)) < 0.02
    conf = rng.normal(size=(50, 1000))
    grid = np.concatenate([[-np.inf], np.sort(rng.normal(size=1000))])

    def run(fn):
        return fn(rel, conf, grid)
    return "sweep_ap (50 queries x 1000 samples x 1001 T)", run


def adam_case(rng):
    n = 670_000  # parameters of the default estimator
    p, g = rng.standard_normal(n), rng.standard_normal(n)

    def run(fn):
        q, m, v = p.copy(), np.zeros(n), np.zeros(n)
        fn(q, g, m, v, 1e-4, 0.9, 0.999, 0.1, 0.001, 1e-8, 5e-5)
        return q
    return "adam_update (670k params)", run


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, list):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b, equal_nan=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':48s} {'numba ms':>9s} {'numpy ms':>9s} {'speedup':>8s}")
    for case in (phoc_case, sweep_case, adam_case):
        name, run = case(rng)
        fast, slow = (getattr(_kernels, f"{run_name}") for run_name in _names(name))
        if not same(run(fast), run(slow)):  # also triggers compilation
            raise SystemExit(f"{name}: numba and numpy results differ")
        t_fast = min(timeit.repeat(lambda: run(fast), number=1, repeat=args.repeat)) * 1e3
        t_slow = min(timeit.repeat(lambda: run(slow), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:48s} {t_fast:9.2f} {t_slow:9.2f} {t_slow / t_fast:7.1f}x")


def _names(label):
    base = label.split()[0]
    return f"{base}_numba", f"{base}_numpy"


if __name__ == "__main__":
    main()
