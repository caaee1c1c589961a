"""Adaptive value generation over power-of-two lattices.

Each numerical option explores a lattice of powers of two inside
[min, 2 * recommended_max]; binary options explore (OFF, ON). Actions are
numbered from 1: option i (1-based, schema order) owns action 2i-1
(increase / set ON) and action 2i (decrease / set OFF).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Mapping

from .constraints import OFF, ON, ConstraintExpr, Value, check, repair
from .errors import RepairInfeasibleError
from .schema import BINARY, Configuration, OptionSpec, Schema

INCREASE = "increase"
DECREASE = "decrease"

DOUBLE_THEN_CEIL = "double-then-ceil"
NEXT_POW2 = "next-pow2"

INCREASE_POLICIES = (DOUBLE_THEN_CEIL, NEXT_POW2)


@dataclass(frozen=True)
class ValueLattice:
    """The ordered values an option may take while tuning."""

    option: str
    values: tuple[Value, ...]

    def __len__(self) -> int:
        return len(self.values)


def lattice(spec: OptionSpec) -> ValueLattice:
    """Build the option's value lattice.

    Numerical lattices hold every power of two v with min <= v <= twice the
    recommended maximum, starting at the smallest power of two >= min.
    """
    if spec.kind == BINARY:
        return ValueLattice(spec.name, (OFF, ON))
    upper = spec.effective_max
    value = 1
    while value < spec.min:
        value *= 2
    values = []
    while value <= upper:
        values.append(value)
        value *= 2
    return ValueLattice(spec.name, tuple(values))


def lattices_for(schema: Schema) -> dict[str, ValueLattice]:
    return {option.name: lattice(option) for option in schema.options}


def action_count(schema: Schema) -> int:
    return 2 * len(schema.options)


def encode_action(option_index: int, direction: str) -> int:
    """Action number for a 0-based option index and a direction."""
    if direction not in (INCREASE, DECREASE):
        raise ValueError(f"unknown direction {direction!r}")
    return 2 * option_index + (1 if direction == INCREASE else 2)


def decode_action(action: int, n_options: int) -> tuple[int, str]:
    """Inverse of encode_action; returns (0-based option index, direction)."""
    if not 1 <= action <= 2 * n_options:
        raise ValueError(f"action {action} out of range for {n_options} options")
    option_index, parity = divmod(action - 1, 2)
    return option_index, INCREASE if parity == 0 else DECREASE


def step_value(current: Value, spec: OptionSpec, values: tuple[Value, ...],
               direction: str, policy: str = DOUBLE_THEN_CEIL) -> Value:
    """Next lattice value in the given direction, saturating at the ends."""
    if spec.kind == BINARY:
        return ON if direction == INCREASE else OFF
    if policy not in INCREASE_POLICIES:
        raise ValueError(f"unknown increase policy {policy!r}")
    if direction == INCREASE:
        if policy == DOUBLE_THEN_CEIL:
            candidates = [v for v in values if v >= 2 * current]
        else:
            candidates = [v for v in values if v > current]
        return candidates[0] if candidates else values[-1]
    candidates = [v for v in values if 2 * v <= current]
    return candidates[-1] if candidates else values[0]


def apply_action(
    config: Configuration,
    action: int,
    lattices: Mapping[str, ValueLattice],
    constraints: Iterable[ConstraintExpr] | None = None,
    policy: str = DOUBLE_THEN_CEIL,
) -> tuple[Configuration, bool]:
    """Apply an action; returns (new configuration, changed flag).

    The stepped option is pinned while constraint repair adjusts other
    options. A saturated step or an infeasible repair leaves the
    configuration untouched (changed == False).
    """
    schema = config.schema
    if constraints is None:
        constraints = schema.constraints
    option_index, direction = decode_action(action, len(schema))
    spec = schema.options[option_index]
    current = config[spec.name]
    new = step_value(current, spec, lattices[spec.name].values, direction, policy)
    if new == current:
        return config, False
    return _settle(config, spec.name, new, constraints, lattices)


def apply_random_value(
    config: Configuration,
    action: int,
    lattices: Mapping[str, ValueLattice],
    rng: random.Random,
    constraints: Iterable[ConstraintExpr] | None = None,
) -> tuple[Configuration, bool]:
    """Assign the action's option a uniform random in-range value.

    Used by the baselines that replace adaptive value generation; the
    action's direction is ignored. Repair semantics match apply_action.
    """
    schema = config.schema
    if constraints is None:
        constraints = schema.constraints
    option_index, _ = decode_action(action, len(schema))
    spec = schema.options[option_index]
    if spec.kind == BINARY:
        new: Value = rng.choice((OFF, ON))
    else:
        new = rng.randint(spec.min, spec.effective_max)
    if new == config[spec.name]:
        return config, False
    return _settle(config, spec.name, new, constraints, lattices)


def _settle(
    config: Configuration,
    name: str,
    new: Value,
    constraints: Iterable[ConstraintExpr],
    lattices: Mapping[str, ValueLattice],
) -> tuple[Configuration, bool]:
    constraints = tuple(constraints)
    candidate = config.replace(**{name: new})
    if check(candidate, constraints):
        try:
            candidate = repair(candidate, name, constraints, lattices)
        except RepairInfeasibleError:
            return config, False
    return candidate, True
