"""Constraint-aware covering-array sampling.

Stage I samples the configuration space with a greedy covering array:
each option contributes a small ladder of sampling levels drawn from its
value lattice, and rows are chosen so that every feasible combination of
``strength`` option levels appears in at least one feasible row.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass

import numpy as np

from . import kernels
from .constraints import ConstraintExpr, Value, find_assignment
from .errors import SchemaError
from .lattice import lattice
from .schema import BINARY, Configuration, OptionSpec, Schema

# Greedy candidate pool per row, following the classic AETG parameters.
CANDIDATES_PER_ROW = 50

# Consecutive zero-gain greedy rounds before switching to targeted search.
_STALL_LIMIT = 3


@dataclass(frozen=True)
class SamplePlan:
    """A covering array over a schema's sampling levels."""

    schema: Schema
    strength: int
    levels: dict[str, tuple[Value, ...]]
    rows: tuple[Configuration, ...]
    covered_tuples: int
    infeasible_tuples: int


def sampling_levels(spec: OptionSpec, count: int = 4) -> tuple[Value, ...]:
    """Pick up to ``count`` lattice values, evenly spaced in log2.

    Both lattice endpoints are always included; interior picks round to the
    nearest lattice position. Binary options sample (OFF, ON).
    """
    if count < 2:
        raise ValueError("need at least two sampling levels")
    if spec.kind == BINARY:
        return lattice(spec).values
    values = lattice(spec).values
    if len(values) <= count:
        return values
    span = len(values) - 1
    positions = sorted({round(i * span / (count - 1)) for i in range(count)})
    return tuple(values[p] for p in positions)


def build_covering_array(
    schema: Schema,
    strength: int = 3,
    constraints: tuple[ConstraintExpr, ...] | None = None,
    levels: dict[str, tuple[Value, ...]] | None = None,
    seed: int = 0,
    candidates_per_row: int = CANDIDATES_PER_ROW,
    level_count: int = 4,
) -> SamplePlan:
    """Greedy covering array whose rows all satisfy the constraints.

    Every feasible ``strength``-way level combination is covered; tuples no
    feasible row can realize are detected and excluded. Deterministic for a
    fixed seed.
    """
    if constraints is None:
        constraints = schema.constraints
    constraints = tuple(constraints)
    n = len(schema)
    if not 1 <= strength <= n:
        raise ValueError(f"strength {strength} not in [1, {n}]")
    names = schema.names
    level_lists = []
    for option in schema.options:
        chosen = (levels or {}).get(option.name) or sampling_levels(option, level_count)
        level_lists.append(tuple(chosen))
    sizes = np.array([len(l) for l in level_lists], dtype=np.int64)

    combo_list = list(itertools.combinations(range(n), strength))
    combos = np.array(combo_list, dtype=np.int32)
    n_combos = len(combo_list)
    strides = np.zeros((n_combos, strength), dtype=np.int64)
    block_sizes = np.zeros(n_combos, dtype=np.int64)
    for c, combo in enumerate(combo_list):
        size = 1
        for j in reversed(range(strength)):
            strides[c, j] = size
            size *= sizes[combo[j]]
        block_sizes[c] = size
    offsets = np.zeros(n_combos, dtype=np.int64)
    offsets[1:] = np.cumsum(block_sizes)[:-1]
    total = int(block_sizes.sum())

    covered = np.zeros(total, dtype=np.uint8)
    uncovered = total
    rng = np.random.default_rng(seed)
    rows_idx: list[np.ndarray] = []

    def row_env(row: np.ndarray) -> dict[str, Value]:
        return {names[i]: level_lists[i][row[i]] for i in range(n)}

    def feasible(row: np.ndarray) -> bool:
        if not constraints:
            return True
        env = row_env(row)
        return all(c.evaluate(env) for c in constraints)

    def feasible_candidates() -> np.ndarray:
        pool: list[np.ndarray] = []
        for _ in range(20):
            batch = rng.integers(0, sizes, size=(candidates_per_row, n)).astype(np.int32)
            pool.extend(row for row in batch if feasible(row))
            if len(pool) >= candidates_per_row:
                return np.array(pool[:candidates_per_row], dtype=np.int32)
        if pool:
            return np.array(pool, dtype=np.int32)
        # Rejection sampling found nothing; prove a feasible row exists.
        domains = {names[i]: level_lists[i] for i in range(n)}
        solution = find_assignment(list(names), domains, constraints)
        if solution is None:
            raise SchemaError("constraints admit no sampling row")
        row = np.array(
            [level_lists[i].index(solution[names[i]]) for i in range(n)],
            dtype=np.int32,
        )
        return row[None, :]

    gains = np.zeros(candidates_per_row * 20, dtype=np.int64)
    stalls = 0
    while uncovered > 0:
        candidates = feasible_candidates()
        out = gains[: len(candidates)]
        kernels.count_new(candidates, combos, offsets, strides, covered, out)
        best = int(np.argmax(out))
        if out[best] == 0:
            stalls += 1
            if stalls >= _STALL_LIMIT:
                break
            continue
        stalls = 0
        row = np.ascontiguousarray(candidates[best])
        rows_idx.append(row)
        uncovered -= kernels.mark_row(row, combos, offsets, strides, covered)

    # Targeted phase: complete each remaining tuple or prove it infeasible.
    infeasible_tuples = 0
    if uncovered > 0:
        for c, combo in enumerate(combo_list):
            base = int(offsets[c])
            for local in range(int(block_sizes[c])):
                if covered[base + local]:
                    continue
                fixed: dict[str, Value] = {}
                remainder = local
                for j, option_index in enumerate(combo):
                    level_index, remainder = divmod(remainder, int(strides[c, j]))
                    fixed[names[option_index]] = level_lists[option_index][level_index]
                order = [names[i] for i in range(n) if i not in combo]
                domains = {names[i]: level_lists[i] for i in range(n) if i not in combo}
                solution = find_assignment(order, domains, constraints, fixed)
                if solution is None:
                    covered[base + local] = 1
                    infeasible_tuples += 1
                    uncovered -= 1
                    continue
                merged = {**fixed, **solution}
                row = np.array(
                    [level_lists[i].index(merged[names[i]]) for i in range(n)],
                    dtype=np.int32,
                )
                rows_idx.append(row)
                uncovered -= kernels.mark_row(row, combos, offsets, strides, covered)
    assert uncovered == 0

    rows = tuple(Configuration(schema, row_env(row)) for row in rows_idx)
    return SamplePlan(
        schema=schema,
        strength=strength,
        levels={names[i]: level_lists[i] for i in range(n)},
        rows=rows,
        covered_tuples=total - infeasible_tuples,
        infeasible_tuples=infeasible_tuples,
    )


def plan_to_csv(plan: SamplePlan) -> str:
    """Rows as CSV, one configuration per line, columns in schema order."""
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    names = plan.schema.names
    writer.writerow(names)
    for config in plan.rows:
        writer.writerow([config[name] for name in names])
    return buffer.getvalue()
