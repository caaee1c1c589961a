"""Tuning strategies and cross-strategy comparison.

confrl is the full two-stage pipeline: covering-array sampling plus
clustering ranks the options, then weighted epsilon-greedy Q-learning
with adaptive power-of-two values, a measurement cache, and
between-episode state merging tunes the system. The ablations drop one
ingredient each, and m_rnd is the no-learning random-walk baseline.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .constraints import OFF, ON, check, repair
from .envs import Environment, SyntheticEnv, synth_optimum
from .errors import RepairInfeasibleError, SchemaError
from .lattice import DOUBLE_THEN_CEIL, lattices_for
from .qlearn import ADAPTIVE_VALUES, RANDOM_VALUES, LearnerParams, run
from .ranking import (
    DEFAULT_CLUSTERS,
    DEFAULT_TOP,
    DEFAULT_WEIGHT,
    PerfDataset,
    RankedOptions,
    cluster,
    map_score,
    rank_options,
)
from .report import RunReport
from .sampling import build_covering_array
from .schema import BINARY, Configuration, Schema, default_configuration
from .states import StateRegistry


@dataclass(frozen=True)
class StrategyTraits:
    stage1: bool
    learning: bool
    merging: bool
    adaptive_values: bool
    explore_always: bool


STRATEGIES: dict[str, StrategyTraits] = {
    # Full pipeline.
    "confrl": StrategyTraits(True, True, True, True, False),
    # No state merging.
    "confrl_a": StrategyTraits(True, True, False, True, False),
    # Random in-range values instead of adaptive lattice stepping.
    "confrl_d": StrategyTraits(True, True, True, False, False),
    # Random walk: random option, random value, no learning at all.
    "m_rnd": StrategyTraits(False, False, False, False, True),
}


def random_configuration(schema: Schema, rng: random.Random) -> Configuration:
    """Uniform in-range values, repaired to feasibility if needed."""
    values = {}
    for option in schema.options:
        if option.kind == BINARY:
            values[option.name] = rng.choice((OFF, ON))
        else:
            values[option.name] = rng.randint(option.min, option.effective_max)
    config = Configuration(schema, values)
    if check(config, schema.constraints):
        config = repair(config, None, schema.constraints, lattices_for(schema))
    return config


def resolve_initial_state(
    schema: Schema, mode: str, rng: random.Random
) -> Configuration:
    """Map an --initial-state argument to a configuration.

    "default" uses the schema defaults, "random" draws one feasible
    configuration per run, "file:<path>" loads a JSON value mapping.
    """
    if mode == "default":
        config = default_configuration(schema)
        violated = check(config, schema.constraints)
        if violated:
            raise SchemaError(
                f"default configuration violates: {violated[0].text}"
            )
        return config
    if mode == "random":
        try:
            return random_configuration(schema, rng)
        except RepairInfeasibleError:
            raise SchemaError("constraints admit no feasible configuration") from None
    if mode.startswith("file:"):
        path = mode[len("file:"):]
        try:
            values = json.loads(Path(path).read_text())
        except OSError as exc:
            raise SchemaError(f"cannot read initial state file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise SchemaError(f"initial state file is not valid JSON: {exc.msg}") from None
        if not isinstance(values, dict):
            raise SchemaError("initial state file must be a JSON object")
        config = Configuration(schema, values)
        violated = check(config, schema.constraints)
        if violated:
            raise SchemaError(
                f"initial state violates: {violated[0].text}"
            )
        return config
    raise SchemaError(f"unknown initial state mode {mode!r}")


def rank_stage(
    schema: Schema,
    env: Environment,
    registry: StateRegistry,
    seed: int,
    strength: int = 3,
    level_count: int = 4,
    clusters: int = DEFAULT_CLUSTERS,
    top: int = DEFAULT_TOP,
    weight: float = DEFAULT_WEIGHT,
) -> tuple[RankedOptions | None, PerfDataset | None]:
    """Stage I: sample, measure, cluster, rank.

    Measurements go through the shared registry so stage II reuses them.
    Returns (None, None) when the plan is too small to cluster.
    """
    plan = build_covering_array(schema, strength, seed=seed, level_count=level_count)
    records = []
    for config in plan.rows:
        _, measurement = registry.get_or_measure(config, env)
        records.append((config, measurement))
    dataset = PerfDataset(schema, tuple(records))
    k = min(clusters, len(records))
    if k < 2:
        return None, dataset
    assignment = cluster(dataset, k=k, seed=seed)
    if len(set(assignment.tolist())) < 2:
        return None, dataset
    ranked = rank_options(dataset, assignment, top=top, weight=weight)
    return ranked, dataset


def run_strategy(
    strategy: str,
    schema: Schema,
    env: Environment,
    params: LearnerParams,
    seed: int,
    *,
    increase_policy: str = DOUBLE_THEN_CEIL,
    initial_state: str = "default",
    ground_truth: set[str] | None = None,
    strength: int = 3,
    level_count: int = 4,
    clusters: int = DEFAULT_CLUSTERS,
    top: int = DEFAULT_TOP,
    weight: float = DEFAULT_WEIGHT,
    p_goal: float | None = None,
    record_transitions: bool = True,
) -> RunReport:
    """Run one strategy end to end and return its report."""
    if strategy not in STRATEGIES:
        raise SchemaError(f"unknown strategy {strategy!r}")
    traits = STRATEGIES[strategy]
    rng = random.Random(seed)
    registry = StateRegistry()

    ranked = None
    if traits.stage1:
        ranked, _ = rank_stage(
            schema, env, registry, seed,
            strength=strength, level_count=level_count,
            clusters=clusters, top=top, weight=weight,
        )

    initial = resolve_initial_state(schema, initial_state, rng)
    report = run(
        env,
        schema,
        ranked,
        params,
        rng,
        strategy=strategy,
        initial=initial,
        increase_policy=increase_policy,
        value_mode=ADAPTIVE_VALUES if traits.adaptive_values else RANDOM_VALUES,
        learning=traits.learning,
        merging=traits.merging,
        explore_always=traits.explore_always,
        registry=registry,
        record_transitions=record_transitions,
        seed=seed,
    )
    report.params["initial_state"] = initial_state
    report.params["strategy_traits"] = {
        "stage1": traits.stage1,
        "learning": traits.learning,
        "merging": traits.merging,
        "adaptive_values": traits.adaptive_values,
        "explore_always": traits.explore_always,
    }
    if ranked is not None:
        report.ranking = [[name, score] for name, score in ranked.scores]
        report.influential = list(ranked.influential)
        if ground_truth:
            report.ranking_map = float(map_score(ranked.names, ground_truth))

    if p_goal is None and isinstance(env, SyntheticEnv) and env.spec.noise_sigma == 0:
        try:
            p_goal = synth_optimum(env.spec, schema)
        except (ValueError, SchemaError):
            p_goal = None
    report.p_goal = p_goal
    report.finalize()
    return report


@dataclass(frozen=True)
class ComparisonRow:
    strategy: str
    seed: int
    final_window_mean: float
    best_measurement: float
    converged_episode: int | None
    distinct_states: int
    merged_states: int
    evaluations: int
    gain_vs_baseline: float | None


def compare(reports: list[RunReport], window: int = 10) -> list[ComparisonRow]:
    """Summarize runs side by side; the first report is the baseline.

    Refuses to compare runs against different schemas or environments.
    """
    if not reports:
        raise ValueError("nothing to compare")
    digests = {(r.schema_digest, r.env_digest) for r in reports}
    if len(digests) > 1:
        raise ValueError("reports come from different schemas or environments")
    baseline = reports[0].final_window_mean(window)
    rows = []
    for report in reports:
        mean = report.final_window_mean(window)
        gain = None if baseline == 0 else (mean - baseline) / baseline
        rows.append(
            ComparisonRow(
                strategy=report.strategy,
                seed=report.seed,
                final_window_mean=mean,
                best_measurement=report.best_measurement,
                converged_episode=report.converged_episode,
                distinct_states=report.distinct_states,
                merged_states=report.merged_states,
                evaluations=report.evaluations,
                gain_vs_baseline=gain,
            )
        )
    return rows
