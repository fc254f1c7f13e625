"""Benchmark the compiled distance kernel against the pure-Python fallback.

The neighbor index computes edit distances between every query/candidate
sentence pair, so this loop dominates index-build time on larger corpora.

    python3 benchmarks/bench_kernels.py [--pairs 2000] [--max-len 40]
"""

import argparse
import time

import numpy as np

from srlmem import kernels
from srlmem.kernels import _pykernels


def make_pairs(n_pairs, max_len, n_tags, rng):
    pairs = []
    for _ in range(n_pairs):
        a = rng.integers(0, n_tags, size=rng.integers(1, max_len + 1)).astype(np.intc)
        b = rng.integers(0, n_tags, size=rng.integers(1, max_len + 1)).astype(np.intc)
        pairs.append((a, b))
    return pairs


def bench(fn, pairs, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        total = 0
        for a, b in pairs:
            total += fn(a, b)
        best = min(best, time.perf_counter() - start)
    return best, total


def bench_many(fn_many, query, candidates, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn_many(query, candidates)
        best = min(best, time.perf_counter() - start)
    return best, int(out.sum())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pairs", type=int, default=2000)
    parser.add_argument("--max-len", type=int, default=40)
    parser.add_argument("--tags", type=int, default=40)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    pairs = make_pairs(args.pairs, args.max_len, args.tags, rng)

    print(f"active backend: {kernels.BACKEND}")
    print(f"{args.pairs} pairs, lengths 1..{args.max_len}, {args.tags} tags\n")

    query = pairs[0][0]
    candidates = [b for _, b in pairs]
    groups = [
        ("levenshtein", bench(_pykernels.levenshtein, pairs), None),
        ("levenshtein_many", bench_many(_pykernels.levenshtein_many, query, candidates), None),
    ]
    if kernels.BACKEND == "compiled":
        groups[0] = (groups[0][0], groups[0][1], bench(kernels.levenshtein, pairs))
        groups[1] = (
            groups[1][0],
            groups[1][1],
            bench_many(kernels.levenshtein_many, query, candidates),
        )
        for name, (_, pure_sum), (_, comp_sum) in groups:
            assert pure_sum == comp_sum, f"backends disagree on {name}"

    print(f"{'kernel':<18}  {'pure s':>9}  {'compiled s':>11}  {'speedup':>8}")
    for name, (pure_t, _), compiled in groups:
        if compiled is None:
            print(f"{name:<18}  {pure_t:9.4f}  {'-':>11}  {'-':>8}")
        else:
            comp_t = compiled[0]
            print(f"{name:<18}  {pure_t:9.4f}  {comp_t:11.4f}  {pure_t / comp_t:7.1f}x")


if __name__ == "__main__":
    main()
