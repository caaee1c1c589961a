"""Benchmark the coverage-counting kernels: compiled extension vs NumPy.

Runs the raw count_new/mark_row kernels on a synthetic greedy-selection
workload, then times a full covering-array build with each backend
patched in. Usage:

    python3 benchmarks/bench_coverage.py [--options 20] [--levels 4]
        [--batches 200] [--candidates 50] [--seed 0]
"""

import argparse
import itertools
import json
import time

import numpy as np

from conftuner import build_covering_array, parse_schema
from conftuner import sampling
from conftuner.kernels import available_backends


def kernel_workload(n_options, n_levels, strength, batches, candidates, seed):
    """Precompute one greedy-selection workload shared by both backends."""
    combo_list = list(itertools.combinations(range(n_options), strength))
    combos = np.array(combo_list, dtype=np.int32)
    sizes = np.full(n_options, n_levels, dtype=np.int64)
    strides = np.zeros((len(combo_list), strength), dtype=np.int64)
    block_sizes = np.zeros(len(combo_list), dtype=np.int64)
    for c, combo in enumerate(combo_list):
        size = 1
        for j in reversed(range(strength)):
            strides[c, j] = size
            size *= sizes[combo[j]]
        block_sizes[c] = size
    offsets = np.zeros(len(combo_list), dtype=np.int64)
    offsets[1:] = np.cumsum(block_sizes)[:-1]
    total = int(block_sizes.sum())
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, n_levels, size=(batches, candidates, n_options),
                        dtype=np.int64).astype(np.int32)
    return combos, offsets, strides, total, rows


def run_kernels(backend, combos, offsets, strides, total, rows):
    """Greedy pass: score each batch, mark the best row of each batch."""
    covered = np.zeros(total, dtype=np.uint8)
    out = np.zeros(rows.shape[1], dtype=np.int64)
    marked = 0
    start = time.perf_counter()
    for batch in rows:
        backend.count_new(batch, combos, offsets, strides, covered, out)
        best = int(np.argmax(out))
        marked += backend.mark_row(np.ascontiguousarray(batch[best]),
                                   combos, offsets, strides, covered)
    return time.perf_counter() - start, marked


def wide_schema(n_options):
    options = [
        {"name": f"n{i:02d}", "kind": "numerical", "min": 1,
         "recommended_max": 512, "default": 64}
        for i in range(n_options)
    ]
    return parse_schema(json.dumps({"options": options, "constraints": []}))


def run_end_to_end(backend, schema, seed):
    saved = (sampling.kernels.count_new, sampling.kernels.mark_row)
    sampling.kernels.count_new = backend.count_new
    sampling.kernels.mark_row = backend.mark_row
    try:
        start = time.perf_counter()
        plan = build_covering_array(schema, strength=3, seed=seed)
        return time.perf_counter() - start, len(plan.rows)
    finally:
        sampling.kernels.count_new, sampling.kernels.mark_row = saved


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--options", type=int, default=20)
    parser.add_argument("--levels", type=int, default=4)
    parser.add_argument("--batches", type=int, default=200)
    parser.add_argument("--candidates", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends available: {', '.join(sorted(backends))}")
    workload = kernel_workload(args.options, args.levels, 3,
                               args.batches, args.candidates, args.seed)
    combos = workload[0]
    tuples_per_batch = args.candidates * len(combos)

    print(f"\nkernel workload: {args.options} options x {args.levels} levels, "
          f"t=3, {args.batches} batches x {args.candidates} candidates")
    kernel_times = {}
    for name in sorted(backends):
        seconds, marked = run_kernels(backends[name], *workload)
        kernel_times[name] = seconds
        rate = args.batches * tuples_per_batch / seconds / 1e6
        print(f"  {name:9s} {seconds:8.3f}s  "
              f"{rate:8.1f}M tuple-checks/s  (marked {marked})")
    if len(kernel_times) == 2:
        print(f"  speedup: {kernel_times['python'] / kernel_times['compiled']:.2f}x")

    schema = wide_schema(args.options)
    print(f"\nend-to-end build_covering_array, {args.options} unconstrained options")
    build_times = {}
    for name in sorted(backends):
        seconds, rows = run_end_to_end(backends[name], schema, args.seed)
        build_times[name] = seconds
        print(f"  {name:9s} {seconds:8.3f}s  ({rows} rows)")
    if len(build_times) == 2:
        print(f"  speedup: {build_times['python'] / build_times['compiled']:.2f}x")


if __name__ == "__main__":
    main()
