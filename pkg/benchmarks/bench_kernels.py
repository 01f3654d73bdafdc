"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Both backends get identical inputs; the outputs are checked for equality
before any timing is reported.
"""

import argparse
import time

import numpy as np

from ctxprop import _kernels


def _gibbs_inputs(seed, tokens=20_000, docs=400, V=2_000, T=16, sweeps=5):
    rng = np.random.default_rng(seed)
    words = rng.integers(0, V, tokens).astype(np.int64)
    doc_ids = np.sort(rng.integers(0, docs, tokens)).astype(np.int64)
    z = rng.integers(0, T, tokens).astype(np.int64)
    n_dt = np.zeros((docs, T), np.int64)
    n_tw = np.zeros((T, V), np.int64)
    np.add.at(n_dt, (doc_ids, z), 1)
    np.add.at(n_tw, (z, words), 1)
    alpha, beta = 50.0 / T, 0.01
    u = rng.random((sweeps, tokens))
    return words, doc_ids, z, n_dt, n_tw, n_tw.sum(axis=1), alpha, beta, V * beta, u


def bench_gibbs(mod, seed):
    args = _gibbs_inputs(seed)
    words, docs, z, n_dt, n_tw, n_t, alpha, beta, vbeta, u = args
    z, n_dt, n_tw, n_t = z.copy(), n_dt.copy(), n_tw.copy(), n_t.copy()
    t0 = time.perf_counter()
    mod.gibbs_sweeps(words, docs, z, n_dt, n_tw, n_t, alpha, beta, vbeta, u)
    return time.perf_counter() - t0, n_tw


def bench_greedy(mod, seed, scenes=300):
    rng = np.random.default_rng(seed)
    mats = [rng.random((1000, 12)) ** 4 for _ in range(scenes)]
    t0 = time.perf_counter()
    out = [mod.greedy_match(m, 0.5) for m in mats]
    return time.perf_counter() - t0, np.concatenate(out)


def bench_overlaps(mod, seed, queries=20_000, kept=1000):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, 1200, (kept + queries, 2))
    wh = rng.uniform(10, 200, (kept + queries, 2))
    boxes = np.ascontiguousarray(np.hstack([xy, xy + wh]))
    pool, qs = np.ascontiguousarray(boxes[:kept]), boxes[kept:]
    t0 = time.perf_counter()
    out = [mod.overlaps_any(q, pool, kept, 0.95) for q in qs]
    return time.perf_counter() - t0, np.array(out)


BENCHES = {
    "gibbs_sweeps (20k tokens, T=16, 5 sweeps)": bench_gibbs,
    "greedy_match (300 x 1000x12 IoU)": bench_greedy,
    "overlaps_any (20k queries, 1000 kept)": bench_overlaps,
}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    if "cython" not in _kernels.BACKENDS:
        raise SystemExit("compiled core not built; run 'pip install -e . --no-build-isolation'")
    py, cy = _kernels.get_backend("python"), _kernels.get_backend("cython")
    print(f"{'kernel':<44} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for name, fn in BENCHES.items():
        tp, tc = [], []
        for r in range(args.repeat):
            a_t, a = fn(py, r)
            b_t, b = fn(cy, r)
            if not np.array_equal(a, b):
                raise SystemExit(f"{name}: backends disagree")
            tp.append(a_t)
            tc.append(b_t)
        print(f"{name:<44} {min(tp):>10.4f} {min(tc):>10.4f} {min(tp) / min(tc):>7.1f}x")


if __name__ == "__main__":
    main()
