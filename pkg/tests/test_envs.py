"""Environment tests: synthetic models, external drivers, stubs."""

import json
import random

import pytest

from conftuner import (
    OFF,
    ON,
    Condition,
    Effect,
    EnvironmentFailure,
    ExternalEnv,
    ExternalEnvSpec,
    FunctionEnv,
    Interaction,
    SchemaError,
    SequenceEnv,
    SyntheticEnv,
    SyntheticEnvSpec,
    default_configuration,
    lattice,
    load_environment,
    random_synth_spec,
    synth_best,
    synth_evaluate,
    synth_optimum,
)
from conftuner.envs import (
    external_spec_from_doc,
    external_spec_to_doc,
    synth_spec_from_doc,
    synth_spec_to_doc,
)


def _spec(**overrides):
    base = dict(
        seed=0,
        base=100.0,
        effects=(
            Effect(Condition("KeepAlive", ON, "above"), 40.0),
            Effect(Condition("MaxClients", 256, "above"), 25.0),
        ),
    )
    base.update(overrides)
    return SyntheticEnvSpec(**base)


class TestCondition:
    def test_above_and_below(self):
        above = Condition("x", 16, "above")
        assert above.holds({"x": 16}) and above.holds({"x": 17})
        assert not above.holds({"x": 15})
        below = Condition("x", 16, "below")
        assert below.holds({"x": 16}) and below.holds({"x": 15})
        assert not below.holds({"x": 17})

    def test_binary_values_order_off_below_on(self):
        on_needed = Condition("flag", ON, "above")
        assert on_needed.holds({"flag": ON})
        assert not on_needed.holds({"flag": OFF})
        off_needed = Condition("flag", OFF, "below")
        assert off_needed.holds({"flag": OFF})
        assert not off_needed.holds({"flag": ON})

    def test_unknown_direction_rejected(self):
        with pytest.raises(SchemaError):
            Condition("x", 1, "sideways")


class TestSyntheticModel:
    def test_evaluate_sums_matching_effects(self):
        spec = _spec()
        assert synth_evaluate(spec, {"KeepAlive": OFF, "MaxClients": 102}) == 100.0
        assert synth_evaluate(spec, {"KeepAlive": ON, "MaxClients": 102}) == 140.0
        assert synth_evaluate(spec, {"KeepAlive": ON, "MaxClients": 512}) == 165.0

    def test_interactions_need_both_conditions(self):
        spec = _spec(interactions=(
            Interaction(Condition("KeepAlive", ON, "above"),
                        Condition("MaxClients", 256, "above"), -30.0),
        ))
        assert synth_evaluate(spec, {"KeepAlive": ON, "MaxClients": 102}) == 140.0
        assert synth_evaluate(spec, {"KeepAlive": ON, "MaxClients": 256}) == 135.0

    def test_negative_worst_case_rejected(self):
        with pytest.raises(SchemaError, match="negative"):
            _spec(base=10.0, effects=(
                Effect(Condition("KeepAlive", ON, "above"), -40.0),
            ))

    def test_noise_is_seeded_and_clamped(self, apache_schema):
        spec = _spec(noise_sigma=5.0)
        config = default_configuration(apache_schema)
        first = SyntheticEnv(spec, apache_schema)
        second = SyntheticEnv(spec, apache_schema)
        series_a = [first.evaluate(config) for _ in range(10)]
        series_b = [second.evaluate(config) for _ in range(10)]
        assert series_a == series_b  # same seed, same noise stream
        assert len(set(series_a)) > 1
        assert all(m >= 0 for m in series_a)

    def test_noiseless_env_matches_closed_form(self, apache_schema):
        spec = _spec()
        env = SyntheticEnv(spec, apache_schema)
        config = default_configuration(apache_schema).replace(KeepAlive=ON)
        assert env.evaluate(config) == synth_evaluate(spec, config.values)

    def test_unknown_option_rejected(self, apache_schema):
        spec = _spec(effects=(Effect(Condition("Nope", 1, "above"), 5.0),))
        with pytest.raises(SchemaError, match="unknown option"):
            SyntheticEnv(spec, apache_schema)

    def test_digest_distinguishes_specs(self, apache_schema):
        a = SyntheticEnv(_spec(), apache_schema)
        b = SyntheticEnv(_spec(base=101.0), apache_schema)
        assert a.digest() != b.digest()
        assert a.digest() == SyntheticEnv(_spec(), apache_schema).digest()


class TestSynthBest:
    def test_hand_checked_optimum(self, apache_schema):
        # KeepAlive=ON adds 40; MaxClients >= 256 adds 25 and is feasible
        # (3 * 12 = 36 < 256). Optimum = 100 + 40 + 25.
        spec = _spec()
        config, best = synth_best(spec, apache_schema)
        assert best == 165.0
        assert config["KeepAlive"] == ON
        assert config["MaxClients"] >= 256
        assert synth_optimum(spec, apache_schema) == 165.0

    def test_constraints_filter_candidates(self, apache_schema):
        # A below-condition on MaxClients at 16 conflicts with the
        # constraint 3 * 12 = 36 < MaxClients, so its +50 is unreachable.
        spec = SyntheticEnvSpec(
            seed=0, base=100.0,
            effects=(
                Effect(Condition("MaxClients", 16, "below"), 50.0),
                Effect(Condition("KeepAlive", ON, "above"), 10.0),
            ),
        )
        _, best = synth_best(spec, apache_schema)
        assert best == 110.0

    def test_limit_guards_explosion(self, apache_schema):
        spec = _spec()
        with pytest.raises(ValueError, match="exceeds"):
            synth_best(spec, apache_schema, limit=3)


class TestRandomSynthSpec:
    def test_deterministic_per_seed(self, apache_schema):
        a = random_synth_spec(apache_schema, seed=7, influential=3)
        b = random_synth_spec(apache_schema, seed=7, influential=3)
        assert a == b
        c = random_synth_spec(apache_schema, seed=8, influential=3)
        assert a != c

    def test_conditions_never_hold_at_defaults(self, apache_schema):
        defaults = default_configuration(apache_schema).values
        for seed in range(25):
            spec = random_synth_spec(apache_schema, seed=seed, influential=3)
            for effect in spec.effects:
                assert not effect.condition.holds(defaults)

    def test_thresholds_sit_on_the_lattice(self, apache_schema):
        for seed in range(10):
            spec = random_synth_spec(apache_schema, seed=seed, influential=4)
            for effect in spec.effects:
                option = apache_schema.option(effect.condition.option)
                assert effect.condition.threshold in lattice(option).values

    def test_contribution_scale(self, apache_schema):
        spec = random_synth_spec(apache_schema, seed=1, influential=3,
                                 base=1000.0, contribution_scale=0.1)
        for effect in spec.effects:
            assert 80.0 <= effect.contribution <= 120.0

    def test_too_many_influential_rejected(self, apache_schema):
        with pytest.raises(ValueError, match="not enough"):
            random_synth_spec(apache_schema, seed=0, influential=99)

    def test_interactions_planted(self, apache_schema):
        spec = random_synth_spec(apache_schema, seed=3, influential=3,
                                 interactions=2)
        assert len(spec.interactions) == 2
        names = {e.condition.option for e in spec.effects}
        for interaction in spec.interactions:
            assert interaction.first.option in names
            assert interaction.second.option in names


class TestDocRoundTrips:
    def test_synth_spec(self, apache_schema):
        spec = random_synth_spec(apache_schema, seed=5, influential=3,
                                 interactions=1, noise_sigma=2.0)
        doc = json.loads(json.dumps(synth_spec_to_doc(spec)))
        assert synth_spec_from_doc(doc) == spec

    def test_synth_spec_missing_contribution(self):
        with pytest.raises(SchemaError, match="contribution"):
            synth_spec_from_doc({
                "kind": "synthetic", "base": 1.0,
                "influential": [{"option": "x", "threshold": 1,
                                 "direction": "above"}],
            })

    def test_external_spec(self):
        spec = ExternalEnvSpec(
            template="clients ${MaxClients}\n",
            write_path="/tmp/app.conf",
            commands={"start": "true", "stop": "true"},
            benchmark="echo 'rps 10.5'",
            output_pattern=r"rps (\d+\.\d+)",
        )
        doc = json.loads(json.dumps(external_spec_to_doc(spec)))
        assert external_spec_from_doc(doc) == spec

    def test_external_spec_validation(self):
        with pytest.raises(SchemaError, match="'start'"):
            ExternalEnvSpec(template="", write_path="/tmp/x",
                            commands={}, benchmark="true",
                            output_pattern=r"(\d+)")
        with pytest.raises(SchemaError, match="capturing group"):
            ExternalEnvSpec(template="", write_path="/tmp/x",
                            commands={"start": "true"}, benchmark="true",
                            output_pattern=r"\d+")
        with pytest.raises(SchemaError, match="lifecycle"):
            ExternalEnvSpec(template="", write_path="/tmp/x",
                            commands={"start": "true", "boot": "true"},
                            benchmark="true", output_pattern=r"(\d+)")


class TestExternalEnv:
    def _spec(self, tmp_path, **overrides):
        log = tmp_path / "lifecycle.log"
        conf = tmp_path / "app.conf"
        base = dict(
            template="clients ${MaxClients}\nkeepalive ${KeepAlive}\n",
            write_path=str(conf),
            commands={
                "start": f"echo start >> {log}",
                "stop": f"echo stop >> {log}",
                "reload": f"echo reload >> {log}",
            },
            benchmark=(
                f"n=$(grep -c clients {conf}); echo \"throughput: $n.5 rps\""
            ),
            output_pattern=r"throughput: (\d+\.\d+) rps",
            timeout_seconds=10.0,
        )
        base.update(overrides)
        return ExternalEnvSpec(**base)

    def test_lifecycle_and_measurement(self, apache_schema, tmp_path):
        spec = self._spec(tmp_path)
        env = ExternalEnv(spec, apache_schema)
        config = default_configuration(apache_schema)
        assert env.evaluate(config) == 1.5
        assert env.evaluate(config.replace(MaxClients=256)) == 1.5
        env.close()
        log = (tmp_path / "lifecycle.log").read_text().split()
        # First evaluation starts; the second reloads; close stops.
        assert log == ["start", "reload", "stop"]
        rendered = (tmp_path / "app.conf").read_text()
        assert "clients 256" in rendered
        assert "keepalive OFF" in rendered

    def test_stop_start_cycle_without_reload(self, apache_schema, tmp_path):
        base = self._spec(tmp_path)
        commands = {k: v for k, v in base.commands.items() if k != "reload"}
        env = ExternalEnv(self._spec(tmp_path, commands=commands),
                          apache_schema)
        config = default_configuration(apache_schema)
        env.evaluate(config)
        env.evaluate(config)
        env.close()
        log = (tmp_path / "lifecycle.log").read_text().split()
        assert log == ["start", "stop", "start", "stop"]

    def test_start_failure_phase(self, apache_schema, tmp_path):
        spec = self._spec(tmp_path, commands={"start": "exit 3"})
        env = ExternalEnv(spec, apache_schema)
        with pytest.raises(EnvironmentFailure) as exc:
            env.evaluate(default_configuration(apache_schema))
        assert exc.value.phase == "start"

    def test_benchmark_failure_phase(self, apache_schema, tmp_path):
        spec = self._spec(tmp_path, benchmark="echo boom >&2; exit 1")
        env = ExternalEnv(spec, apache_schema)
        with pytest.raises(EnvironmentFailure) as exc:
            env.evaluate(default_configuration(apache_schema))
        assert exc.value.phase == "benchmark"
        assert "boom" in str(exc.value)

    def test_parse_failure_phase(self, apache_schema, tmp_path):
        spec = self._spec(tmp_path, benchmark="echo 'no numbers here'")
        env = ExternalEnv(spec, apache_schema)
        with pytest.raises(EnvironmentFailure) as exc:
            env.evaluate(default_configuration(apache_schema))
        assert exc.value.phase == "parse"

    def test_unknown_template_option_rejected(self, apache_schema, tmp_path):
        spec = self._spec(tmp_path, template="x ${Missing}\n")
        with pytest.raises(SchemaError, match="unknown option"):
            ExternalEnv(spec, apache_schema)

    def test_pattern_searches_stderr_too(self, apache_schema, tmp_path):
        spec = self._spec(tmp_path,
                          benchmark="echo 'throughput: 9.0 rps' >&2")
        env = ExternalEnv(spec, apache_schema)
        assert env.evaluate(default_configuration(apache_schema)) == 9.0


class TestStubEnvs:
    def test_sequence_env_replays_and_records(self, apache_schema):
        env = SequenceEnv([10, 20.5])
        config = default_configuration(apache_schema)
        assert env.evaluate(config) == 10.0
        assert env.evaluate(config) == 20.5
        assert len(env.calls) == 2
        with pytest.raises(EnvironmentFailure) as exc:
            env.evaluate(config)
        assert exc.value.phase == "benchmark"
        assert "exhausted" in str(exc.value)

    def test_function_env(self, apache_schema):
        env = FunctionEnv(lambda values: values["MaxClients"] * 2)
        config = default_configuration(apache_schema)
        assert env.evaluate(config) == 204.0
        assert env.digest() == FunctionEnv(lambda v: 0).digest()


class TestLoadEnvironment:
    def test_synthetic_dispatch(self, apache_schema):
        doc = {
            "kind": "synthetic", "seed": 1, "base": 50.0,
            "influential": [{"option": "KeepAlive", "threshold": ON,
                             "direction": "above", "contribution": 5.0}],
        }
        env = load_environment(json.dumps(doc), apache_schema)
        assert isinstance(env, SyntheticEnv)
        assert env.evaluate(
            default_configuration(apache_schema).replace(KeepAlive=ON)
        ) == 55.0

    def test_sequence_dispatch(self, apache_schema):
        env = load_environment(
            json.dumps({"kind": "sequence", "measurements": [1, 2]}),
            apache_schema,
        )
        assert isinstance(env, SequenceEnv)

    def test_external_dispatch(self, apache_schema, tmp_path):
        doc = {
            "kind": "external",
            "template": "x ${MaxClients}\n",
            "write_path": str(tmp_path / "c"),
            "commands": {"start": "true"},
            "benchmark": "echo '1.0'",
            "output_pattern": r"(\d+\.\d+)",
        }
        env = load_environment(json.dumps(doc), apache_schema)
        assert isinstance(env, ExternalEnv)

    def test_unknown_kind_rejected(self, apache_schema):
        with pytest.raises(SchemaError, match="unknown environment kind"):
            load_environment(json.dumps({"kind": "quantum"}), apache_schema)

    def test_missing_kind_rejected(self, apache_schema):
        with pytest.raises(SchemaError, match="'kind'"):
            load_environment("{}", apache_schema)

    def test_invalid_json_rejected(self, apache_schema):
        with pytest.raises(SchemaError, match="not valid JSON"):
            load_environment("{nope", apache_schema)
