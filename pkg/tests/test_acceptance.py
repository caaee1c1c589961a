"""Acceptance suite: ten primary criteria, each timed against its budget.

Every test appends one PASS/FAIL line to the terminal summary and checks
derived values against independent brute-force oracles where one exists.
"""

import itertools
import json
import math
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

import conftest
from conftest import battery_env_spec, battery_schema
from test_constraints import _brute_force_repair

from conftuner import (
    DECREASE,
    DOUBLE_THEN_CEIL,
    INCREASE,
    NEXT_POW2,
    OFF,
    ON,
    LearnerParams,
    OptionSpec,
    QTable,
    SequenceEnv,
    SyntheticEnv,
    build_covering_array,
    default_configuration,
    lattice,
    lattices_for,
    map_score,
    parse_schema,
    q_update,
    random_synth_spec,
    repair,
    replay_forced,
    run_strategy,
    step_value,
    synth_optimum,
)
from conftuner.constraints import BinOp, Lit, Var


def _record(line: str) -> None:
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)


@contextmanager
def criterion(number, name, limit=None, extra_seconds=0.0):
    """Time a criterion body, record one summary line, enforce the budget."""
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        elapsed = time.perf_counter() - start + extra_seconds
        _record(f"criterion {number:2d} {name}: FAIL ({elapsed:.2f}s)")
        raise
    elapsed = time.perf_counter() - start + extra_seconds
    within = limit is None or elapsed < limit
    _record(f"criterion {number:2d} {name}: {'PASS' if within else 'FAIL'} "
            f"({elapsed:.2f}s)")
    assert within, f"criterion {number} exceeded {limit}s budget: {elapsed:.2f}s"


class TestCriterion01:
    def test_worked_example_replay(self, apache_schema):
        with criterion(1, "worked-example replay", 1.0):
            env = SequenceEnv([10.0, 20.0, 25.0, 30.0, 20.0])
            report = replay_forced(
                env, apache_schema,
                [(1, DOUBLE_THEN_CEIL), (5, DOUBLE_THEN_CEIL),
                 (7, NEXT_POW2), (6, DOUBLE_THEN_CEIL)],
                LearnerParams(alpha=0.5, gamma=0.9),
            )
            visited = [dict(call.values) for call in env.calls]
            assert visited == [
                {"KeepAlive": OFF, "MaxClients": 102,
                 "StartServers": 12, "ThreadsPerChild": 3},
                {"KeepAlive": ON, "MaxClients": 102,
                 "StartServers": 12, "ThreadsPerChild": 3},
                {"KeepAlive": ON, "MaxClients": 102,
                 "StartServers": 32, "ThreadsPerChild": 3},
                {"KeepAlive": ON, "MaxClients": 256,
                 "StartServers": 32, "ThreadsPerChild": 4},
                {"KeepAlive": ON, "MaxClients": 256,
                 "StartServers": 16, "ThreadsPerChild": 4},
            ]
            rewards = [t.reward for t in report.transitions]
            assert rewards[:3] == [1.0, 0.25, 0.2]
            assert math.isclose(rewards[3], -1 / 3, abs_tol=1e-9)


class TestCriterion02:
    def test_map_exactness(self):
        with criterion(2, "MAP exactness", 1.0):
            top = map_score(("o1", "o2"), {"o1", "o2"})
            assert isinstance(top, Fraction)
            assert top == Fraction(1)
            split = map_score(("o1", "x", "o2"), {"o1", "o2"})
            assert isinstance(split, Fraction)
            assert split == Fraction(5, 6)


class TestCriterion03:
    def test_value_generation(self):
        with criterion(3, "value generation", None):
            ss = OptionSpec(name="StartServers", kind="numerical", min=1,
                            recommended_max=100, default=12)
            ss_values = lattice(ss).values
            assert step_value(12, ss, ss_values, INCREASE, DOUBLE_THEN_CEIL) == 32
            assert step_value(32, ss, ss_values, DECREASE, DOUBLE_THEN_CEIL) == 16
            tpc = OptionSpec(name="ThreadsPerChild", kind="numerical", min=1,
                             recommended_max=128, default=3)
            assert step_value(3, tpc, lattice(tpc).values, INCREASE, NEXT_POW2) == 4
            mc = OptionSpec(name="MaxClients", kind="numerical", min=1,
                            recommended_max=512, default=102)
            assert lattice(mc).values == (1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024)
            assert len(lattice(mc).values) == 11


class TestCriterion04:
    def test_repair_worked_example_is_brute_force_optimal(self, apache_schema):
        with criterion(4, "constraint repair", 5.0):
            config = default_configuration(apache_schema).replace(
                ThreadsPerChild=4, StartServers=32
            )
            lattices = lattices_for(apache_schema)
            fixed = repair(config, "ThreadsPerChild", lattices=lattices)
            assert fixed["MaxClients"] == 256
            assert fixed["StartServers"] == 32
            assert fixed["ThreadsPerChild"] == 4
            oracle = _brute_force_repair(
                config, "ThreadsPerChild", apache_schema.constraints, lattices
            )
            assert dict(fixed.values) == oracle


def _coverage_schema(seed):
    """Small seeded schema with at most one biting, satisfiable constraint."""
    rng = random.Random(seed * 7919 + 3)
    count = rng.randint(4, 8)
    options = []
    for i in range(count):
        if rng.random() < 0.3:
            options.append({"name": f"b{i}", "kind": "binary",
                            "default": rng.choice(["OFF", "ON"])})
        else:
            rec = rng.choice([8, 16, 32])
            options.append({"name": f"n{i}", "kind": "numerical", "min": 1,
                            "recommended_max": rec,
                            "default": rng.randint(1, rec)})
    numerical = [o for o in options if o["kind"] == "numerical"]
    constraints = []
    if len(numerical) >= 2:
        first, second = rng.sample(numerical, 2)
        a, b = first["name"], second["name"]
        amax = 2 * first["recommended_max"]
        bmax = 2 * second["recommended_max"]
        form = rng.randrange(3)
        if form == 0:
            constraints.append(f"{a} + {b} < {amax + bmax}")
        elif form == 1:
            constraints.append(f"{a} * {b} <= {amax * bmax // 4}")
        else:
            constraints.append(f"{a} >= {b}")
    return parse_schema(json.dumps({"options": options,
                                    "constraints": constraints}))


def _numeric_levels(levels):
    return np.array([{OFF: 0, ON: 1}.get(v, v) for v in levels], dtype=np.int64)


def _vec(node, columns):
    """Independent vectorized expression evaluator over level columns."""
    if isinstance(node, Lit):
        return np.int64(node.value)
    if isinstance(node, Var):
        return columns[node.name]
    left, right = _vec(node.left, columns), _vec(node.right, columns)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    return left // right


_COMPARE = {"<": np.less, "<=": np.less_equal, ">": np.greater,
            ">=": np.greater_equal, "==": np.equal, "!=": np.not_equal}


class TestCriterion05:
    def test_covering_battery_exhaustive(self):
        with criterion(5, "covering battery", 60.0):
            for seed in range(20):
                schema = _coverage_schema(seed)
                plan = build_covering_array(schema, strength=3, seed=seed)
                names = schema.names
                levels = [plan.levels[n] for n in names]
                assert all(len(lv) <= 4 for lv in levels)

                # Full level product, encoded as per-option level indices.
                grids = np.meshgrid(*(np.arange(len(lv)) for lv in levels),
                                    indexing="ij")
                index_cols = [g.reshape(-1) for g in grids]
                columns = {
                    name: _numeric_levels(levels[i])[index_cols[i]]
                    for i, name in enumerate(names)
                }
                mask = np.ones(index_cols[0].shape, dtype=bool)
                for constraint in schema.constraints:
                    mask &= _COMPARE[constraint.op](
                        _vec(constraint.left, columns),
                        _vec(constraint.right, columns),
                    )
                assert mask.any()
                feasible_cols = [col[mask].astype(np.int64)
                                 for col in index_cols]

                # 100% of rows feasible: every row's full index key must
                # appear among the enumerated feasible assignments.
                weights = [5 ** i for i in range(len(names))]
                full_keys = np.zeros(feasible_cols[0].shape, dtype=np.int64)
                for col, w in zip(feasible_cols, weights):
                    full_keys += col * w
                feasible_keys = set(full_keys.tolist())
                to_index = [
                    {value: i for i, value in enumerate(lv)} for lv in levels
                ]
                row_indices = []
                for config in plan.rows:
                    idx = [to_index[i][config[n]] for i, n in enumerate(names)]
                    row_indices.append(idx)
                    assert sum(i * w for i, w in zip(idx, weights)) in feasible_keys

                # 100% of feasible 3-tuples covered by the rows.
                for combo in itertools.combinations(range(len(names)), 3):
                    oracle = np.unique(
                        feasible_cols[combo[0]] * 25
                        + feasible_cols[combo[1]] * 5
                        + feasible_cols[combo[2]]
                    )
                    covered = {
                        idx[combo[0]] * 25 + idx[combo[1]] * 5 + idx[combo[2]]
                        for idx in row_indices
                    }
                    assert set(oracle.tolist()) == covered


class CountingEnv:
    """Wrapper that counts evaluations and records visited rows."""

    def __init__(self, inner, schema):
        self.inner = inner
        self.names = schema.names
        self.calls = 0
        self.rows = []

    def evaluate(self, config):
        self.calls += 1
        self.rows.append(tuple(config[n] for n in self.names))
        return self.inner.evaluate(config)

    def digest(self):
        return self.inner.digest()


class TestCriterion06:
    def test_cache_exactly_once(self, apache_schema):
        with criterion(6, "cache exactly-once", 10.0):
            for seed in range(5):
                spec = random_synth_spec(apache_schema, seed=seed,
                                         influential=3)
                env = CountingEnv(SyntheticEnv(spec), apache_schema)
                report = run_strategy(
                    "confrl", apache_schema, env,
                    LearnerParams(episodes=15, steps_per_episode=10),
                    seed, record_transitions=False,
                )
                registry = report.registry
                assert env.calls == report.evaluations
                assert env.calls == len(registry.perf_cache)
                # Exactly once: no configuration row measured twice.
                assert len(set(env.rows)) == len(env.rows)
                # Re-visiting every stored state changes no counters.
                before = (env.calls, registry.evaluations,
                          len(registry.perf_cache), len(registry.states))
                for sid, config in list(registry.states.items()):
                    resolved, measurement = registry.get_or_measure(config, env)
                    assert resolved == registry.resolve(sid)
                    assert measurement == registry.measurement_of(resolved)
                assert before == (env.calls, registry.evaluations,
                                  len(registry.perf_cache),
                                  len(registry.states))


class TestCriterion07:
    def test_merging_reduces_distinct_states(self):
        with criterion(7, "state-merging effect", 120.0):
            params = LearnerParams(episodes=120, steps_per_episode=20,
                                   epsilon_floor=0.05)
            for seed in range(3):
                schema = battery_schema(seed)
                spec = battery_env_spec(schema, seed)
                merged_run = run_strategy(
                    "confrl", schema, SyntheticEnv(spec), params, seed,
                    record_transitions=False,
                )
                unmerged_run = run_strategy(
                    "confrl_a", schema, SyntheticEnv(spec), params, seed,
                    record_transitions=False,
                )
                assert merged_run.merged_states > 0
                assert merged_run.distinct_states < unmerged_run.distinct_states


@pytest.fixture(scope="module")
def battery():
    """Shared effectiveness battery: confrl and m_rnd on 10 seeded specs."""
    start = time.perf_counter()
    params = LearnerParams(episodes=300, steps_per_episode=30,
                           epsilon_floor=0.05)
    runs = []
    for seed in range(10):
        schema = battery_schema(seed)
        spec = battery_env_spec(schema, seed)
        planted = {e.condition.option for e in spec.effects}
        goal = synth_optimum(spec, schema)
        confrl = run_strategy(
            "confrl", schema, SyntheticEnv(spec), params, seed,
            ground_truth=planted, p_goal=goal, record_transitions=False,
        )
        m_rnd = run_strategy(
            "m_rnd", schema, SyntheticEnv(spec), params, seed,
            p_goal=goal, record_transitions=False,
        )
        runs.append({"seed": seed, "schema": schema, "planted": planted,
                     "goal": goal, "confrl": confrl, "m_rnd": m_rnd})
    return {"runs": runs, "seconds": time.perf_counter() - start}


class TestCriterion08:
    def test_tuning_effectiveness(self, battery):
        with criterion(8, "tuning effectiveness", 600.0,
                       extra_seconds=battery["seconds"]):
            goal_hits = 0
            beats = 0
            for entry in battery["runs"]:
                final = entry["confrl"].final_window_mean()
                assert len(entry["confrl"].episodes) <= 300
                if final >= 0.9 * entry["goal"]:
                    goal_hits += 1
                if final > entry["m_rnd"].final_window_mean():
                    beats += 1
            assert goal_hits >= 8, f"only {goal_hits}/10 seeds reached the goal"
            assert beats >= 8, f"only {beats}/10 seeds beat m_rnd"


class TestCriterion09:
    def test_ranking_beats_random_selection(self, battery):
        with criterion(9, "ranking effectiveness", 300.0):
            confrl_total = Fraction(0)
            random_total = Fraction(0)
            draws_per_seed = 200
            rng = random.Random(0xA11CE)
            for entry in battery["runs"]:
                ranked = entry["confrl"].influential
                assert len(ranked) == 10
                confrl_total += map_score(ranked, entry["planted"])
                names = list(entry["schema"].names)
                for _ in range(draws_per_seed):
                    random_total += map_score(rng.sample(names, 10),
                                              entry["planted"])
            confrl_mean = confrl_total / len(battery["runs"])
            random_mean = random_total / (len(battery["runs"]) * draws_per_seed)
            assert confrl_mean > random_mean, (
                f"confrl MAP {float(confrl_mean):.4f} does not exceed "
                f"random-selection MAP {float(random_mean):.4f}"
            )


class TestCriterion10:
    def test_q_update_arithmetic(self):
        with criterion(10, "Q-update arithmetic", None):
            table = QTable(8)
            first = q_update(table, "s1", 1, 1.0, "s1", alpha=0.5, gamma=0.9)
            assert first == 0.5
            second = q_update(table, "s1", 1, 1.0, "s1", alpha=0.5, gamma=0.9)
            assert second == 0.975
            degenerate = QTable(8)
            value = q_update(degenerate, "s2", 3, 0.25, "s4",
                             alpha=1.0, gamma=0.0)
            assert value == 0.25
