"""Tabular Q-learning over configuration states.

States are canonical configuration ids; option i (1-based, schema order)
owns action 2i-1 (increase / set ON) and action 2i (decrease / set OFF).
Rows for unseen states are all-zero. Rewards are relative measurement
gains: (new - current) / current.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .envs import Environment
from .errors import SchemaError
from .lattice import (
    DOUBLE_THEN_CEIL,
    INCREASE_POLICIES,
    apply_action,
    apply_random_value,
    lattices_for,
)
from .ranking import RankedOptions
from .report import EpisodeRecord, MergeEvent, RunReport, Transition
from .schema import Configuration, Schema, default_configuration
from .states import StateRegistry

QTABLE_FORMAT = "conftuner-qtable/v1"

ADAPTIVE_VALUES = "adaptive"
RANDOM_VALUES = "random"


@dataclass(frozen=True)
class LearnerParams:
    """Q-learning hyperparameters and budget.

    The budget is episodes and/or wall-clock seconds; the run stops at
    whichever limit is hit first. At least one must be set.
    """

    alpha: float = 0.5
    gamma: float = 0.9
    epsilon0: float = 0.3
    epsilon_decay: float = 0.99
    epsilon_floor: float = 0.01
    steps_per_episode: int = 10
    episodes: int | None = None
    seconds: float | None = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must be in [0, 1]")
        if not 0 <= self.epsilon0 <= 1:
            raise ValueError("epsilon0 must be in [0, 1]")
        if not 0 < self.epsilon_decay <= 1:
            raise ValueError("epsilon_decay must be in (0, 1]")
        if not 0 <= self.epsilon_floor <= 1:
            raise ValueError("epsilon_floor must be in [0, 1]")
        if self.steps_per_episode < 1:
            raise ValueError("steps_per_episode must be >= 1")
        if self.episodes is not None and self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.seconds is not None and self.seconds <= 0:
            raise ValueError("seconds must be positive")

    def budgeted(self) -> "LearnerParams":
        if self.episodes is None and self.seconds is None:
            raise ValueError("set an episode and/or seconds budget")
        return self


def reward(new: float, current: float) -> float:
    """Relative gain of the new measurement over the current one."""
    if current == 0:
        # Degenerate baseline; any positive measurement counts as a full gain.
        return 1.0 if new > 0 else 0.0
    return (new - current) / current


def decay_epsilon(epsilon: float, decay: float, floor: float = 0.01) -> float:
    """One per-episode multiplicative decay step, clamped at the floor."""
    return max(floor, epsilon * decay)


class QTable:
    """Dense per-state action-value rows keyed by state id."""

    def __init__(self, n_actions: int):
        if n_actions < 1:
            raise ValueError("n_actions must be >= 1")
        self.n_actions = n_actions
        self.rows: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.rows)

    def __contains__(self, state: str) -> bool:
        return state in self.rows

    def states(self) -> list[str]:
        return list(self.rows)

    def _ensure(self, state: str) -> np.ndarray:
        row = self.rows.get(state)
        if row is None:
            row = np.zeros(self.n_actions, dtype=np.float64)
            self.rows[state] = row
        return row

    def q(self, state: str, action: int) -> float:
        row = self.rows.get(state)
        return 0.0 if row is None else float(row[action - 1])

    def row(self, state: str) -> np.ndarray:
        """Copy of the state's row (zeros for unseen states)."""
        row = self.rows.get(state)
        return np.zeros(self.n_actions) if row is None else row.copy()

    def max_value(self, state: str) -> float:
        row = self.rows.get(state)
        return 0.0 if row is None else float(row.max())

    def best_action(self, state: str) -> int:
        """Greedy action; ties break to the lowest action number."""
        row = self.rows.get(state)
        if row is None:
            return 1
        return int(np.argmax(row)) + 1

    def fold_max(self, slave: str, master: str) -> None:
        """Merge the slave's row into the master's by element-wise max."""
        slave_row = self.rows.pop(slave, None)
        if slave_row is None:
            return
        master_row = self.rows.get(master)
        if master_row is None:
            self.rows[master] = slave_row
        else:
            np.maximum(master_row, slave_row, out=master_row)

    def copy(self) -> "QTable":
        clone = QTable(self.n_actions)
        clone.rows = {state: row.copy() for state, row in self.rows.items()}
        return clone

    def equals(self, other: "QTable", atol: float = 0.0) -> bool:
        if self.n_actions != other.n_actions or set(self.rows) != set(other.rows):
            return False
        return all(
            np.allclose(self.rows[s], other.rows[s], rtol=0.0, atol=atol)
            for s in self.rows
        )


def q_update(
    qtable: QTable,
    state: str,
    action: int,
    reward_value: float,
    next_state: str,
    alpha: float,
    gamma: float,
) -> float:
    """One Bellman update; returns the new Q(state, action)."""
    row = qtable._ensure(state)
    target = reward_value + gamma * qtable.max_value(next_state)
    row[action - 1] += alpha * (target - row[action - 1])
    return float(row[action - 1])


def select_action(
    qtable: QTable,
    state: str,
    epsilon: float,
    weights: Sequence[float],
    rng: random.Random,
) -> int:
    """Epsilon-greedy selection.

    With probability epsilon: pick an option proportionally to its weight
    and a direction uniformly. Otherwise: the greedy action.
    """
    n_options = len(weights)
    if rng.random() < epsilon:
        index = rng.choices(range(n_options), weights=weights, k=1)[0]
        return 2 * index + 1 + rng.randrange(2)
    return qtable.best_action(state)


def run(
    env: Environment,
    schema: Schema,
    ranked: RankedOptions | None,
    params: LearnerParams,
    rng: random.Random,
    *,
    strategy: str = "confrl",
    initial: Configuration | None = None,
    increase_policy: str = DOUBLE_THEN_CEIL,
    value_mode: str = ADAPTIVE_VALUES,
    learning: bool = True,
    merging: bool = True,
    explore_always: bool = False,
    registry: StateRegistry | None = None,
    qtable: QTable | None = None,
    record_transitions: bool = True,
    seed: int | None = None,
) -> RunReport:
    """Run episodes of (possibly degenerate) Q-learning and report.

    The flags realize the baselines: value_mode="random" replaces lattice
    stepping with uniform in-range values; learning=False skips table
    updates; merging=False skips between-episode state merging;
    explore_always pins epsilon to 1 (pure exploration).
    """
    params.budgeted()
    if increase_policy not in INCREASE_POLICIES:
        raise ValueError(f"unknown increase policy {increase_policy!r}")
    if value_mode not in (ADAPTIVE_VALUES, RANDOM_VALUES):
        raise ValueError(f"unknown value mode {value_mode!r}")
    lattices = lattices_for(schema)
    constraints = schema.constraints
    if ranked is not None:
        weights = list(ranked.weights_for(schema))
    else:
        weights = [option.weight for option in schema.options]
    registry = registry if registry is not None else StateRegistry()
    qtable = qtable if qtable is not None else QTable(2 * len(schema))
    initial = initial if initial is not None else default_configuration(schema)

    report = RunReport(
        strategy=strategy,
        seed=seed if seed is not None else -1,
        schema_digest=schema.digest(),
        env_digest=env.digest(),
        params={
            "alpha": params.alpha,
            "gamma": params.gamma,
            "epsilon0": params.epsilon0,
            "epsilon_decay": params.epsilon_decay,
            "epsilon_floor": params.epsilon_floor,
            "steps_per_episode": params.steps_per_episode,
            "episodes": params.episodes,
            "seconds": params.seconds,
            "increase_policy": increase_policy,
            "value_mode": value_mode,
            "learning": learning,
            "merging": merging,
            "initial_values": dict(initial.values),
        },
    )

    epsilon = 1.0 if explore_always else params.epsilon0
    start = time.perf_counter()
    best_measurement: float | None = None
    best_config = initial
    episode = 0
    while True:
        if params.episodes is not None and episode >= params.episodes:
            break
        if params.seconds is not None and time.perf_counter() - start >= params.seconds:
            break
        config = initial
        state, current = registry.get_or_measure(config, env)
        if best_measurement is None or current > best_measurement:
            best_measurement, best_config = current, config
        measurements = []
        for step in range(params.steps_per_episode):
            action = select_action(qtable, state, epsilon, weights, rng)
            if value_mode == ADAPTIVE_VALUES:
                config2, changed = apply_action(
                    config, action, lattices, constraints, increase_policy
                )
            else:
                config2, changed = apply_random_value(
                    config, action, lattices, rng, constraints
                )
            next_state, measurement = registry.get_or_measure(config2, env)
            step_reward = reward(measurement, current)
            if learning:
                q_update(
                    qtable, state, action, step_reward, next_state,
                    params.alpha, params.gamma,
                )
            if record_transitions:
                report.transitions.append(
                    Transition(
                        episode=episode,
                        step=step,
                        state=state,
                        action=action,
                        next_state=next_state,
                        measurement=measurement,
                        reward=step_reward,
                        changed=changed,
                    )
                )
            measurements.append(measurement)
            if measurement > best_measurement:
                best_measurement, best_config = measurement, config2
            config, state, current = config2, next_state, measurement
        if merging:
            summary = registry.merge_states(qtable)
            for master, slaves in summary.merged.items():
                for slave in slaves:
                    report.merge_events.append(MergeEvent(episode, master, slave))
        report.episodes.append(
            EpisodeRecord(
                episode=episode,
                seconds=time.perf_counter() - start,
                epsilon=epsilon,
                mean_measurement=sum(measurements) / len(measurements),
                best_measurement=best_measurement,
                distinct_states=registry.distinct_states,
                merged_states=registry.merged_states,
                evaluations=registry.evaluations,
            )
        )
        if not explore_always:
            epsilon = decay_epsilon(epsilon, params.epsilon_decay, params.epsilon_floor)
        episode += 1

    report.best_measurement = best_measurement if best_measurement is not None else 0.0
    report.best_values = dict(best_config.values)
    report.evaluations = registry.evaluations
    report.distinct_states = registry.distinct_states
    report.merged_states = registry.merged_states
    report.qtable = qtable  # type: ignore[attr-defined]
    report.registry = registry  # type: ignore[attr-defined]
    return report


def replay_forced(
    env: Environment,
    schema: Schema,
    forced: Sequence[tuple[int, str]],
    params: LearnerParams,
    *,
    initial: Configuration | None = None,
    merging: bool = True,
    registry: StateRegistry | None = None,
    qtable: QTable | None = None,
) -> RunReport:
    """Drive one episode with a forced (action, increase-policy) script.

    Uses the same measurement, reward, and update path as live runs; the
    exploration policy is simply replaced by the script.
    """
    lattices = lattices_for(schema)
    constraints = schema.constraints
    registry = registry if registry is not None else StateRegistry()
    qtable = qtable if qtable is not None else QTable(2 * len(schema))
    config = initial if initial is not None else default_configuration(schema)

    report = RunReport(
        strategy="forced",
        seed=-1,
        schema_digest=schema.digest(),
        env_digest=env.digest(),
        params={"alpha": params.alpha, "gamma": params.gamma, "forced": True},
    )
    state, current = registry.get_or_measure(config, env)
    measurements = []
    for step, (action, policy) in enumerate(forced):
        config2, changed = apply_action(config, action, lattices, constraints, policy)
        next_state, measurement = registry.get_or_measure(config2, env)
        step_reward = reward(measurement, current)
        q_update(qtable, state, action, step_reward, next_state, params.alpha, params.gamma)
        report.transitions.append(
            Transition(
                episode=0,
                step=step,
                state=state,
                action=action,
                next_state=next_state,
                measurement=measurement,
                reward=step_reward,
                changed=changed,
            )
        )
        measurements.append(measurement)
        config, state, current = config2, next_state, measurement
    if merging:
        summary = registry.merge_states(qtable)
        for master, slaves in summary.merged.items():
            for slave in slaves:
                report.merge_events.append(MergeEvent(0, master, slave))
    if measurements:
        report.episodes.append(
            EpisodeRecord(
                episode=0,
                seconds=0.0,
                epsilon=0.0,
                mean_measurement=sum(measurements) / len(measurements),
                best_measurement=max(measurements),
                distinct_states=registry.distinct_states,
                merged_states=registry.merged_states,
                evaluations=registry.evaluations,
            )
        )
    report.evaluations = registry.evaluations
    report.distinct_states = registry.distinct_states
    report.merged_states = registry.merged_states
    report.qtable = qtable  # type: ignore[attr-defined]
    report.registry = registry  # type: ignore[attr-defined]
    return report


def rebuild_qtable(report: RunReport, n_actions: int) -> QTable:
    """Reconstruct the QTable by replaying a report's transitions and
    merge events in order; bit-identical to the live run's table."""
    alpha = float(report.params["alpha"])
    gamma = float(report.params["gamma"])
    qtable = QTable(n_actions)
    merges_by_episode: dict[int, list[MergeEvent]] = {}
    for event in report.merge_events:
        merges_by_episode.setdefault(event.episode, []).append(event)
    current_episode: int | None = None
    for transition in report.transitions:
        if current_episode is not None and transition.episode != current_episode:
            for event in merges_by_episode.get(current_episode, []):
                qtable.fold_max(event.slave, event.master)
        current_episode = transition.episode
        q_update(
            qtable,
            transition.state,
            transition.action,
            transition.reward,
            transition.next_state,
            alpha,
            gamma,
        )
    if current_episode is not None:
        for event in merges_by_episode.get(current_episode, []):
            qtable.fold_max(event.slave, event.master)
    return qtable


def qtable_to_doc(qtable: QTable, registry: StateRegistry, schema: Schema) -> dict:
    return {
        "format": QTABLE_FORMAT,
        "schema_digest": schema.digest(),
        "n_actions": qtable.n_actions,
        "q": {state: [float(v) for v in row] for state, row in qtable.rows.items()},
        "states": {
            sid: dict(config.values) for sid, config in registry.states.items()
        },
        "registry": registry.snapshot(),
    }


def qtable_from_doc(doc: dict, schema: Schema) -> tuple[QTable, StateRegistry]:
    if doc.get("format") != QTABLE_FORMAT:
        raise SchemaError(f"not a {QTABLE_FORMAT} document")
    if doc.get("schema_digest") != schema.digest():
        raise SchemaError("qtable document was built against a different schema")
    qtable = QTable(int(doc["n_actions"]))
    for state, values in doc.get("q", {}).items():
        row = np.array(values, dtype=np.float64)
        if len(row) != qtable.n_actions:
            raise SchemaError(f"state {state!r} row has wrong width")
        qtable.rows[state] = row
    states = {
        sid: Configuration(schema, values)
        for sid, values in doc.get("states", {}).items()
    }
    registry = StateRegistry.from_snapshot(doc.get("registry", {}), states)
    return qtable, registry


def save_qtable(path: str | Path, qtable: QTable, registry: StateRegistry, schema: Schema) -> None:
    Path(path).write_text(json.dumps(qtable_to_doc(qtable, registry, schema), indent=2) + "\n")


def load_qtable(path: str | Path, schema: Schema) -> tuple[QTable, StateRegistry]:
    return qtable_from_doc(json.loads(Path(path).read_text()), schema)
