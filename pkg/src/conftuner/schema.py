"""Configuration model: option specifications, schemas, and configurations.

A schema document is a JSON object::

    {
      "options": [
        {"name": "KeepAlive", "kind": "binary", "default": "OFF"},
        {"name": "MaxClients", "kind": "numerical",
         "min": 1, "recommended_max": 512, "default": 102}
      ],
      "constraints": ["ThreadsPerChild * StartServers < MaxClients"]
    }

Option order in the document is significant: it fixes action numbering,
canonical serialization, and every tie-break that mentions schema order.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping

from .constraints import OFF, ON, ConstraintExpr, Value, parse_constraint
from .errors import SchemaError

BINARY = "binary"
NUMERICAL = "numerical"

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

_OPTION_KEYS = {"name", "kind", "default", "min", "recommended_max", "weight"}


@dataclass(frozen=True)
class OptionSpec:
    """One configurable option.

    Numerical options carry an allowed minimum and a recommended maximum;
    the effective maximum explored by the tuner is twice the recommended
    maximum. Binary options take the values OFF and ON.
    """

    name: str
    kind: str
    default: Value
    min: int | None = None
    recommended_max: int | None = None
    weight: float = 1.0

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise SchemaError(f"invalid option name {self.name!r}")
        if self.kind not in (BINARY, NUMERICAL):
            raise SchemaError(f"option {self.name!r} has unknown kind {self.kind!r}")
        if not isinstance(self.weight, (int, float)) or self.weight <= 0:
            raise SchemaError(f"option {self.name!r} weight must be positive")
        if self.kind == BINARY:
            if self.min is not None or self.recommended_max is not None:
                raise SchemaError(
                    f"binary option {self.name!r} must not declare min/recommended_max"
                )
            if self.default not in (OFF, ON):
                raise SchemaError(
                    f"binary option {self.name!r} default must be {OFF!r} or {ON!r}"
                )
            return
        if not isinstance(self.min, int) or not isinstance(self.recommended_max, int):
            raise SchemaError(
                f"numerical option {self.name!r} needs integer min and recommended_max"
            )
        if self.min < 1:
            raise SchemaError(f"option {self.name!r} min must be at least 1")
        if self.min > self.recommended_max:
            raise SchemaError(
                f"option {self.name!r} min exceeds its recommended_max"
            )
        if not isinstance(self.default, int) or isinstance(self.default, bool):
            raise SchemaError(f"numerical option {self.name!r} default must be an integer")
        if not (self.min <= self.default <= self.recommended_max):
            raise SchemaError(
                f"option {self.name!r} default {self.default} is outside "
                f"[{self.min}, {self.recommended_max}]"
            )

    @property
    def effective_max(self) -> int:
        if self.kind != NUMERICAL:
            raise SchemaError(f"option {self.name!r} has no numeric range")
        return 2 * self.recommended_max

    def admits(self, value: Value) -> bool:
        """True if the value is inside the option's explorable range."""
        if self.kind == BINARY:
            return value in (OFF, ON)
        return (
            isinstance(value, int)
            and not isinstance(value, bool)
            and self.min <= value <= self.effective_max
        )


@dataclass(frozen=True)
class Schema:
    """An ordered collection of option specs plus constraints over them."""

    options: tuple[OptionSpec, ...]
    constraints: tuple[ConstraintExpr, ...] = ()

    def __post_init__(self):
        # An empty schema is valid; it parses, renders, and yields an
        # empty default configuration (tuning one is a caller error).
        seen: set[str] = set()
        for option in self.options:
            if option.name in seen:
                raise SchemaError(f"duplicate option name {option.name!r}")
            seen.add(option.name)
        for constraint in self.constraints:
            unknown = constraint.identifiers() - seen
            if unknown:
                raise SchemaError(
                    f"constraint {constraint.text!r} references unknown "
                    f"option(s): {', '.join(sorted(unknown))}"
                )

    def __iter__(self) -> Iterator[OptionSpec]:
        return iter(self.options)

    def __len__(self) -> int:
        return len(self.options)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(option.name for option in self.options)

    def option(self, name: str) -> OptionSpec:
        for candidate in self.options:
            if candidate.name == name:
                return candidate
        raise SchemaError(f"unknown option {name!r}")

    def index(self, name: str) -> int:
        for i, candidate in enumerate(self.options):
            if candidate.name == name:
                return i
        raise SchemaError(f"unknown option {name!r}")

    def digest(self) -> str:
        return hashlib.blake2b(render_schema(self).encode(), digest_size=8).hexdigest()


@dataclass(frozen=True)
class Configuration:
    """A total assignment of values to a schema's options."""

    schema: Schema
    values: Mapping[str, Value] = field(hash=False)

    def __post_init__(self):
        values = dict(self.values)
        object.__setattr__(self, "values", values)
        expected = set(self.schema.names)
        actual = set(values)
        if actual != expected:
            missing = sorted(expected - actual)
            extra = sorted(actual - expected)
            parts = []
            if missing:
                parts.append(f"missing: {', '.join(missing)}")
            if extra:
                parts.append(f"unexpected: {', '.join(extra)}")
            raise SchemaError(f"configuration does not match schema ({'; '.join(parts)})")
        for option in self.schema.options:
            value = values[option.name]
            if not option.admits(value):
                raise SchemaError(
                    f"value {value!r} is out of range for option {option.name!r}"
                )

    def __getitem__(self, name: str) -> Value:
        return self.values[name]

    def replace(self, **updates: Value) -> "Configuration":
        values = dict(self.values)
        for name, value in updates.items():
            if name not in values:
                raise SchemaError(f"unknown option {name!r}")
            values[name] = value
        return Configuration(self.schema, values)

    def canonical(self) -> str:
        return ";".join(f"{o.name}={self.values[o.name]}" for o in self.schema.options)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.schema == other.schema and self.canonical() == other.canonical()

    def __hash__(self) -> int:
        return hash(self.canonical())


StateId = str


def state_id(config: Configuration) -> StateId:
    """64-bit hex identity of the canonical serialization, schema order."""
    return hashlib.blake2b(config.canonical().encode(), digest_size=8).hexdigest()


def default_configuration(schema: Schema) -> Configuration:
    return Configuration(schema, {o.name: o.default for o in schema.options})


def _parse_option(entry: Any, index: int) -> OptionSpec:
    if not isinstance(entry, dict):
        raise SchemaError(f"option #{index} is not an object")
    unknown = set(entry) - _OPTION_KEYS
    if unknown:
        raise SchemaError(
            f"option #{index} has unknown key(s): {', '.join(sorted(unknown))}"
        )
    for key in ("name", "kind", "default"):
        if key not in entry:
            raise SchemaError(f"option #{index} is missing {key!r}")
    kwargs: dict[str, Any] = {
        "name": entry["name"],
        "kind": entry["kind"],
        "default": entry["default"],
    }
    if not isinstance(kwargs["name"], str):
        raise SchemaError(f"option #{index} name must be a string")
    for key in ("min", "recommended_max"):
        if key in entry:
            kwargs[key] = entry[key]
    if "weight" in entry:
        weight = entry["weight"]
        if isinstance(weight, bool) or not isinstance(weight, (int, float)):
            raise SchemaError(f"option {kwargs['name']!r} weight must be a number")
        kwargs["weight"] = float(weight)
    return OptionSpec(**kwargs)


def parse_schema(text: str) -> Schema:
    """Parse a schema document; error messages name the offending field."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(
            f"schema document is not valid JSON: {exc.msg} "
            f"(line {exc.lineno}, column {exc.colno})"
        ) from None
    return schema_from_doc(doc)


def schema_from_doc(doc: Any) -> Schema:
    if not isinstance(doc, dict):
        raise SchemaError("schema document must be a JSON object")
    unknown = set(doc) - {"options", "constraints"}
    if unknown:
        raise SchemaError(
            f"schema document has unknown key(s): {', '.join(sorted(unknown))}"
        )
    if "options" not in doc or not isinstance(doc["options"], list):
        raise SchemaError("schema document needs an 'options' list")
    options = tuple(_parse_option(entry, i) for i, entry in enumerate(doc["options"]))
    raw_constraints = doc.get("constraints", [])
    if not isinstance(raw_constraints, list):
        raise SchemaError("'constraints' must be a list of strings")
    constraints = []
    for i, text in enumerate(raw_constraints):
        if not isinstance(text, str):
            raise SchemaError(f"constraint #{i} must be a string")
        constraints.append(parse_constraint(text))
    return Schema(options, tuple(constraints))


def schema_to_doc(schema: Schema) -> dict:
    options = []
    for option in schema.options:
        entry: dict[str, Any] = {"name": option.name, "kind": option.kind}
        if option.kind == NUMERICAL:
            entry["min"] = option.min
            entry["recommended_max"] = option.recommended_max
        entry["default"] = option.default
        if option.weight != 1.0:
            entry["weight"] = option.weight
        options.append(entry)
    return {
        "options": options,
        "constraints": [c.text for c in schema.constraints],
    }


def render_schema(schema: Schema) -> str:
    """Canonical JSON rendering; parse_schema(render_schema(s)) == s."""
    return json.dumps(schema_to_doc(schema), indent=2) + "\n"
