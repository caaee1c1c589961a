"""Shared fixtures and the acceptance summary hook."""

import json
import random

import pytest

from conftuner import (
    BINARY,
    Condition,
    Effect,
    OFF,
    ON,
    SyntheticEnvSpec,
    lattice,
    parse_schema,
)

# One line per acceptance criterion, echoed after the run so pass/fail is
# visible even with captured stdout.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


APACHE_SCHEMA_DOC = json.dumps(
    {
        "options": [
            {"name": "KeepAlive", "kind": "binary", "default": "OFF"},
            {"name": "MaxClients", "kind": "numerical",
             "min": 1, "recommended_max": 512, "default": 102},
            {"name": "StartServers", "kind": "numerical",
             "min": 1, "recommended_max": 100, "default": 12},
            {"name": "ThreadsPerChild", "kind": "numerical",
             "min": 1, "recommended_max": 128, "default": 3},
        ],
        "constraints": ["ThreadsPerChild * StartServers < MaxClients"],
    },
    indent=2,
)

# The wider variant carries the full constraint set; the extra options give
# the cross-option constraints something to reference.
APACHE_FULL_SCHEMA_DOC = json.dumps(
    {
        "options": [
            {"name": "KeepAlive", "kind": "binary", "default": "OFF"},
            {"name": "MaxClients", "kind": "numerical",
             "min": 1, "recommended_max": 512, "default": 102},
            {"name": "StartServers", "kind": "numerical",
             "min": 1, "recommended_max": 100, "default": 12},
            {"name": "ThreadsPerChild", "kind": "numerical",
             "min": 1, "recommended_max": 128, "default": 3},
            {"name": "ServerLimit", "kind": "numerical",
             "min": 1, "recommended_max": 512, "default": 256},
            {"name": "MaxSpareThreads", "kind": "numerical",
             "min": 1, "recommended_max": 512, "default": 250},
        ],
        "constraints": [
            "MaxClients < ServerLimit",
            "StartServers < MaxSpareThreads",
            "ThreadsPerChild * StartServers < MaxClients",
        ],
    },
    indent=2,
)


@pytest.fixture
def apache_schema():
    return parse_schema(APACHE_SCHEMA_DOC)


@pytest.fixture
def apache_full_schema():
    return parse_schema(APACHE_FULL_SCHEMA_DOC)


def battery_schema(seed: int):
    """A 20-option schema (12 numerical, 8 binary) with seeded structure.

    Defaults stay at or below half the recommended max so planted
    threshold effects never hold at the starting configuration.
    """
    rng = random.Random(seed * 991 + 17)
    options = []
    for i in range(12):
        rec = rng.choice([64, 128, 256, 512])
        default = rng.randint(max(1, rec // 8), rec // 2)
        options.append(
            {"name": f"N{i:02d}", "kind": "numerical", "min": 1,
             "recommended_max": rec, "default": default}
        )
    for i in range(8):
        options.append(
            {"name": f"B{i}", "kind": "binary", "default": rng.choice(["OFF", "ON"])}
        )
    return parse_schema(json.dumps({"options": options, "constraints": []}))


def battery_env_spec(schema, seed: int):
    """Plant five influential options on a battery schema.

    Numerical effects unlock when the option exceeds the first lattice
    value above its default; binary effects when the default is flipped.
    Each contributes about 10% of the base measurement, noise-free.
    """
    rng = random.Random(seed * 37 + 5)
    chosen = rng.sample(list(schema.options), 5)
    effects = []
    for opt in chosen:
        if opt.kind == BINARY:
            flipped = ON if opt.default == OFF else OFF
            direction = "above" if flipped == ON else "below"
            condition = Condition(opt.name, flipped, direction)
        else:
            above = [v for v in lattice(opt).values if v > opt.default]
            condition = Condition(opt.name, above[0], "above")
        amount = 1000.0 * 0.1 * rng.uniform(0.8, 1.2)
        effects.append(Effect(condition, round(amount, 3)))
    return SyntheticEnvSpec(seed=seed, base=1000.0, effects=tuple(effects))
