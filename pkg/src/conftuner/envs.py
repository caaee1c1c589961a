"""Environments that measure a configuration's performance.

Three kinds ship with the package:

* synthetic: a closed-form throughput model with planted influential
  options, optional pairwise interactions, and optional seeded noise;
* external: renders a config-file template, drives a system under test
  through shell lifecycle commands, runs a benchmark command, and parses
  the measurement out of its output;
* sequence: replays a fixed list of measurements (testing and replay).

All measurements are finite floats >= 0, higher is better.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import random
import re
import string
import subprocess
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

from .constraints import OFF, ON, Value, check
from .errors import EnvironmentFailure, SchemaError
from .lattice import lattice
from .schema import BINARY, Configuration, Schema

ABOVE = "above"
BELOW = "below"


class Environment(ABC):
    """Measures configurations; higher measurements are better."""

    #: Whether evaluations are side-effect free and may run concurrently.
    parallel_evaluation: bool = False

    @abstractmethod
    def evaluate(self, config: Configuration) -> float:
        """Measure one configuration. Raises EnvironmentFailure on error."""

    def digest(self) -> str:
        """Stable identity used to refuse cross-environment comparisons."""
        return _digest_doc({"kind": type(self).__name__})

    def close(self) -> None:
        """Release external resources; idempotent."""


def _digest_doc(doc: dict) -> str:
    text = json.dumps(doc, sort_keys=True)
    return hashlib.blake2b(text.encode(), digest_size=8).hexdigest()


def _numeric(value: Value) -> float:
    if value == OFF:
        return 0.0
    if value == ON:
        return 1.0
    return float(value)


@dataclass(frozen=True)
class Condition:
    """A threshold condition on one option's value.

    "above" holds when value >= threshold, "below" when value <= threshold;
    binary values order OFF < ON.
    """

    option: str
    threshold: Value
    direction: str

    def __post_init__(self):
        if self.direction not in (ABOVE, BELOW):
            raise SchemaError(f"unknown direction {self.direction!r}")

    def holds(self, values: Mapping[str, Value]) -> bool:
        value = _numeric(values[self.option])
        threshold = _numeric(self.threshold)
        if self.direction == ABOVE:
            return value >= threshold
        return value <= threshold


@dataclass(frozen=True)
class Effect:
    """A per-option contribution that applies when its condition holds."""

    condition: Condition
    contribution: float


@dataclass(frozen=True)
class Interaction:
    """A pairwise contribution that applies when both conditions hold."""

    first: Condition
    second: Condition
    delta: float


@dataclass(frozen=True)
class SyntheticEnvSpec:
    """Closed-form performance model with planted influential options."""

    seed: int
    base: float
    effects: tuple[Effect, ...]
    interactions: tuple[Interaction, ...] = ()
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.base < 0:
            raise SchemaError("synthetic base measurement must be >= 0")
        if self.noise_sigma < 0:
            raise SchemaError("noise_sigma must be >= 0")
        worst = self.base
        worst += sum(min(0.0, e.contribution) for e in self.effects)
        worst += sum(min(0.0, i.delta) for i in self.interactions)
        if worst < 0:
            raise SchemaError(
                "synthetic spec can go negative: base plus all negative "
                "contributions must stay >= 0"
            )

    def option_names(self) -> set[str]:
        names = {e.condition.option for e in self.effects}
        for interaction in self.interactions:
            names.add(interaction.first.option)
            names.add(interaction.second.option)
        return names


def synth_evaluate(spec: SyntheticEnvSpec, values: Mapping[str, Value]) -> float:
    """Noiseless measurement of a value assignment under the model."""
    measurement = spec.base
    for effect in spec.effects:
        if effect.condition.holds(values):
            measurement += effect.contribution
    for interaction in spec.interactions:
        if interaction.first.holds(values) and interaction.second.holds(values):
            measurement += interaction.delta
    return measurement


class SyntheticEnv(Environment):
    parallel_evaluation = True

    def __init__(self, spec: SyntheticEnvSpec, schema: Schema | None = None):
        if schema is not None:
            unknown = spec.option_names() - set(schema.names)
            if unknown:
                raise SchemaError(
                    f"synthetic spec references unknown option(s): "
                    f"{', '.join(sorted(unknown))}"
                )
        self.spec = spec
        self._noise = random.Random(spec.seed)

    def evaluate(self, config: Configuration) -> float:
        measurement = synth_evaluate(self.spec, config.values)
        if self.spec.noise_sigma > 0:
            measurement += self._noise.gauss(0.0, self.spec.noise_sigma)
        return max(0.0, measurement)

    def digest(self) -> str:
        return _digest_doc(synth_spec_to_doc(self.spec))


def synth_best(
    spec: SyntheticEnvSpec,
    schema: Schema,
    limit: int = 10_000_000,
) -> tuple[Configuration, float]:
    """Best noiseless measurement over the lattice product of the options
    the model touches (all other options stay at their defaults).

    Exhaustive and independent of the tuner; used as the ground-truth
    goal for synthetic experiments. Raises ValueError past ``limit``
    combinations and SchemaError when no combination is feasible.
    """
    involved = [o for o in schema.options if o.name in spec.option_names()]
    domains = [lattice(o).values for o in involved]
    total = 1
    for domain in domains:
        total *= len(domain)
        if total > limit:
            raise ValueError(f"lattice product exceeds {limit} combinations")
    base_values = {o.name: o.default for o in schema.options}
    best: tuple[Configuration, float] | None = None
    for combo in itertools.product(*domains):
        values = dict(base_values)
        for option, value in zip(involved, combo):
            values[option.name] = value
        candidate = Configuration(schema, values)
        if check(candidate, schema.constraints):
            continue
        measurement = synth_evaluate(spec, values)
        if best is None or measurement > best[1]:
            best = (candidate, measurement)
    if best is None:
        raise SchemaError("no feasible lattice assignment for the synthetic model")
    return best


def synth_optimum(spec: SyntheticEnvSpec, schema: Schema, limit: int = 10_000_000) -> float:
    return synth_best(spec, schema, limit)[1]


def random_synth_spec(
    schema: Schema,
    seed: int,
    influential: int = 5,
    base: float = 1000.0,
    contribution_scale: float = 0.1,
    interactions: int = 0,
    noise_sigma: float = 0.0,
) -> SyntheticEnvSpec:
    """Seeded random performance model over a schema.

    Plants ``influential`` options whose conditions do not hold at the
    defaults but are reachable within a couple of lattice steps, each
    contributing about ``contribution_scale * base``.
    """
    eligible = [
        o for o in schema.options
        if o.kind == BINARY or any(v != o.default for v in lattice(o).values)
    ]
    if influential > len(eligible):
        raise ValueError("not enough options with movable values to plant effects")
    rng = random.Random(seed)
    chosen = rng.sample(eligible, influential)
    conditions: list[Condition] = []
    effects = []
    for option in chosen:
        if option.kind == BINARY:
            flipped = ON if option.default == OFF else OFF
            direction = ABOVE if flipped == ON else BELOW
            condition = Condition(option.name, flipped, direction)
        else:
            values = lattice(option).values
            above = [v for v in values if v > option.default]
            below = [v for v in values if v < option.default]
            steps = rng.choice((1, 2))
            direction = rng.choice((ABOVE, BELOW))
            if direction == BELOW and not below:
                direction = ABOVE
            elif direction == ABOVE and not above:
                direction = BELOW
            # The threshold sits `steps` lattice values away from the
            # default, so it never holds there but a step or two of tuning
            # reaches it (over- or undershooting keeps it satisfied).
            if direction == ABOVE:
                threshold = above[min(steps - 1, len(above) - 1)]
            else:
                threshold = below[max(0, len(below) - steps)]
            condition = Condition(option.name, threshold, direction)
        conditions.append(condition)
        amount = base * contribution_scale * rng.uniform(0.8, 1.2)
        effects.append(Effect(condition, round(amount, 3)))
    interaction_specs = []
    if interactions:
        if influential < 2:
            raise ValueError("interactions need at least two influential options")
        for _ in range(interactions):
            first, second = rng.sample(conditions, 2)
            delta = base * contribution_scale * rng.uniform(-0.4, 0.4)
            interaction_specs.append(Interaction(first, second, round(delta, 3)))
    return SyntheticEnvSpec(
        seed=seed,
        base=base,
        effects=tuple(effects),
        interactions=tuple(interaction_specs),
        noise_sigma=noise_sigma,
    )


@dataclass(frozen=True)
class ExternalEnvSpec:
    """How to configure, restart, and benchmark a real system."""

    template: str
    write_path: str
    commands: Mapping[str, str]  # "start" required; "stop"/"reload" optional
    benchmark: str
    output_pattern: str
    timeout_seconds: float = 120.0
    warmup_seconds: float = 0.0

    def __post_init__(self):
        if "start" not in self.commands:
            raise SchemaError("external environment needs a 'start' command")
        unknown = set(self.commands) - {"start", "stop", "reload"}
        if unknown:
            raise SchemaError(
                f"unknown lifecycle command(s): {', '.join(sorted(unknown))}"
            )
        pattern = re.compile(self.output_pattern)
        if pattern.groups != 1:
            raise SchemaError(
                "output_pattern must have exactly one capturing group"
            )
        if self.timeout_seconds <= 0:
            raise SchemaError("timeout_seconds must be positive")
        if self.warmup_seconds < 0:
            raise SchemaError("warmup_seconds must be >= 0")


def _template_identifiers(template: string.Template) -> set[str]:
    names = set()
    for match in template.pattern.finditer(template.template):
        name = match.group("named") or match.group("braced")
        if name:
            names.add(name)
        elif match.group("invalid") is not None:
            raise SchemaError("invalid placeholder in config template")
    return names


class ExternalEnv(Environment):
    parallel_evaluation = False

    def __init__(self, spec: ExternalEnvSpec, schema: Schema):
        self.spec = spec
        self._template = string.Template(spec.template)
        unknown = _template_identifiers(self._template) - set(schema.names)
        if unknown:
            raise SchemaError(
                f"config template references unknown option(s): "
                f"{', '.join(sorted(unknown))}"
            )
        self._pattern = re.compile(spec.output_pattern)
        self._started = False

    def _run(self, phase: str, command: str) -> subprocess.CompletedProcess:
        try:
            proc = subprocess.run(
                command,
                shell=True,
                capture_output=True,
                text=True,
                timeout=self.spec.timeout_seconds,
            )
        except subprocess.TimeoutExpired:
            raise EnvironmentFailure(phase, f"command timed out: {command}") from None
        if proc.returncode != 0:
            detail = (proc.stderr or proc.stdout or "").strip().splitlines()
            tail = detail[-1] if detail else f"exit status {proc.returncode}"
            raise EnvironmentFailure(phase, f"{command!r} failed: {tail}")
        return proc

    def evaluate(self, config: Configuration) -> float:
        try:
            rendered = self._template.substitute(
                {name: str(value) for name, value in config.values.items()}
            )
        except KeyError as exc:
            raise EnvironmentFailure("render", f"missing placeholder {exc}") from None
        try:
            Path(self.spec.write_path).write_text(rendered)
        except OSError as exc:
            raise EnvironmentFailure("render", f"cannot write config: {exc}") from None
        if not self._started:
            self._run("start", self.spec.commands["start"])
            self._started = True
        elif "reload" in self.spec.commands:
            self._run("reload", self.spec.commands["reload"])
        else:
            if "stop" in self.spec.commands:
                self._run("stop", self.spec.commands["stop"])
            self._run("start", self.spec.commands["start"])
        if self.spec.warmup_seconds > 0:
            time.sleep(self.spec.warmup_seconds)
        proc = self._run("benchmark", self.spec.benchmark)
        match = self._pattern.search(proc.stdout) or self._pattern.search(proc.stderr)
        if match is None:
            raise EnvironmentFailure(
                "parse", f"pattern {self.spec.output_pattern!r} not found in output"
            )
        try:
            measurement = float(match.group(1))
        except ValueError:
            raise EnvironmentFailure(
                "parse", f"captured text {match.group(1)!r} is not a number"
            ) from None
        if measurement < 0:
            raise EnvironmentFailure("parse", "measurement is negative")
        return measurement

    def close(self) -> None:
        if self._started and "stop" in self.spec.commands:
            self._run("stop", self.spec.commands["stop"])
        self._started = False

    def digest(self) -> str:
        return _digest_doc(external_spec_to_doc(self.spec))


class SequenceEnv(Environment):
    """Replays a fixed measurement sequence; records the configs it saw."""

    parallel_evaluation = False

    def __init__(self, measurements: list[float]):
        self.measurements = [float(m) for m in measurements]
        self.calls: list[Configuration] = []
        self._next = 0

    def evaluate(self, config: Configuration) -> float:
        if self._next >= len(self.measurements):
            raise EnvironmentFailure("benchmark", "measurement sequence exhausted")
        self.calls.append(config)
        value = self.measurements[self._next]
        self._next += 1
        return value

    def digest(self) -> str:
        return _digest_doc({"kind": "sequence", "measurements": self.measurements})


class FunctionEnv(Environment):
    """Wraps a callable mapping option values to a measurement (testing)."""

    parallel_evaluation = True

    def __init__(self, fn: Callable[[Mapping[str, Value]], float], name: str = "function"):
        self.fn = fn
        self.name = name

    def evaluate(self, config: Configuration) -> float:
        return float(self.fn(config.values))

    def digest(self) -> str:
        return _digest_doc({"kind": "function", "name": self.name})


def _condition_to_doc(condition: Condition) -> dict:
    return {
        "option": condition.option,
        "threshold": condition.threshold,
        "direction": condition.direction,
    }


def _condition_from_doc(doc: Any) -> Condition:
    if not isinstance(doc, dict):
        raise SchemaError("condition must be an object")
    for key in ("option", "threshold", "direction"):
        if key not in doc:
            raise SchemaError(f"condition is missing {key!r}")
    return Condition(doc["option"], doc["threshold"], doc["direction"])


def synth_spec_to_doc(spec: SyntheticEnvSpec) -> dict:
    return {
        "kind": "synthetic",
        "seed": spec.seed,
        "base": spec.base,
        "noise_sigma": spec.noise_sigma,
        "influential": [
            {**_condition_to_doc(e.condition), "contribution": e.contribution}
            for e in spec.effects
        ],
        "interactions": [
            {
                "first": _condition_to_doc(i.first),
                "second": _condition_to_doc(i.second),
                "delta": i.delta,
            }
            for i in spec.interactions
        ],
    }


def synth_spec_from_doc(doc: dict) -> SyntheticEnvSpec:
    effects = []
    for entry in doc.get("influential", []):
        if not isinstance(entry, dict) or "contribution" not in entry:
            raise SchemaError("influential entry needs a 'contribution'")
        condition = _condition_from_doc(
            {k: v for k, v in entry.items() if k != "contribution"}
        )
        effects.append(Effect(condition, float(entry["contribution"])))
    interactions = []
    for entry in doc.get("interactions", []):
        for key in ("first", "second", "delta"):
            if key not in entry:
                raise SchemaError(f"interaction is missing {key!r}")
        interactions.append(
            Interaction(
                _condition_from_doc(entry["first"]),
                _condition_from_doc(entry["second"]),
                float(entry["delta"]),
            )
        )
    return SyntheticEnvSpec(
        seed=int(doc.get("seed", 0)),
        base=float(doc.get("base", 0.0)),
        effects=tuple(effects),
        interactions=tuple(interactions),
        noise_sigma=float(doc.get("noise_sigma", 0.0)),
    )


def external_spec_to_doc(spec: ExternalEnvSpec) -> dict:
    return {
        "kind": "external",
        "template": spec.template,
        "write_path": spec.write_path,
        "commands": dict(spec.commands),
        "benchmark": spec.benchmark,
        "output_pattern": spec.output_pattern,
        "timeout_seconds": spec.timeout_seconds,
        "warmup_seconds": spec.warmup_seconds,
    }


def external_spec_from_doc(doc: dict) -> ExternalEnvSpec:
    for key in ("template", "write_path", "commands", "benchmark", "output_pattern"):
        if key not in doc:
            raise SchemaError(f"external environment is missing {key!r}")
    return ExternalEnvSpec(
        template=doc["template"],
        write_path=doc["write_path"],
        commands=dict(doc["commands"]),
        benchmark=doc["benchmark"],
        output_pattern=doc["output_pattern"],
        timeout_seconds=float(doc.get("timeout_seconds", 120.0)),
        warmup_seconds=float(doc.get("warmup_seconds", 0.0)),
    )


def load_environment(text: str, schema: Schema) -> Environment:
    """Build an environment from a JSON document (dispatch on "kind")."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(
            f"environment document is not valid JSON: {exc.msg} "
            f"(line {exc.lineno}, column {exc.colno})"
        ) from None
    return environment_from_doc(doc, schema)


def environment_from_doc(doc: Any, schema: Schema) -> Environment:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise SchemaError("environment document needs a 'kind'")
    kind = doc["kind"]
    if kind == "synthetic":
        return SyntheticEnv(synth_spec_from_doc(doc), schema)
    if kind == "external":
        return ExternalEnv(external_spec_from_doc(doc), schema)
    if kind == "sequence":
        measurements = doc.get("measurements")
        if not isinstance(measurements, list):
            raise SchemaError("sequence environment needs a 'measurements' list")
        return SequenceEnv(measurements)
    raise SchemaError(f"unknown environment kind {kind!r}")
