"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 schema or environment document
error, 3 environment execution failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .envs import load_environment, random_synth_spec, synth_best, synth_spec_to_doc
from .errors import ConftunerError, EnvironmentFailure, SchemaError, UsageError
from .kernels import backend_name
from .lattice import DOUBLE_THEN_CEIL, INCREASE_POLICIES
from .qlearn import LearnerParams, load_qtable, rebuild_qtable, save_qtable
from .ranking import DEFAULT_CLUSTERS, DEFAULT_TOP, DEFAULT_WEIGHT, map_score
from .report import RunReport
from .sampling import build_covering_array, plan_to_csv
from .schema import Schema, parse_schema
from .states import StateRegistry
from .strategies import STRATEGIES, compare, run_strategy


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: A003 - argparse API
        raise UsageError(message)


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read {what} {path!r}: {exc}") from None


def _load_schema(path: str) -> Schema:
    return parse_schema(_read_text(path, "schema"))


def _load_env(path: str, schema: Schema):
    return load_environment(_read_text(path, "environment"), schema)


def _load_ground_truth(path: str) -> set[str]:
    try:
        doc = json.loads(_read_text(path, "ground truth"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"ground truth file is not valid JSON: {exc.msg}") from None
    if not isinstance(doc, list) or not all(isinstance(n, str) for n in doc):
        raise SchemaError("ground truth file must be a JSON list of option names")
    return set(doc)


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _add_sampling_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--strength", type=int, default=3,
                        help="covering strength t (default 3)")
    parser.add_argument("--levels", type=int, default=4,
                        help="sampling levels per option (default 4)")


def _add_ranking_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--clusters", type=int, default=DEFAULT_CLUSTERS,
                        help=f"K-Means cluster count (default {DEFAULT_CLUSTERS})")
    parser.add_argument("--top", type=int, default=DEFAULT_TOP,
                        help=f"options to boost (default {DEFAULT_TOP})")
    parser.add_argument("--weight", type=float, default=DEFAULT_WEIGHT,
                        help=f"boosted exploration weight (default {DEFAULT_WEIGHT})")


def cmd_sample(args) -> int:
    schema = _load_schema(args.schema)
    plan = build_covering_array(
        schema, args.strength, seed=args.seed, level_count=args.levels
    )
    _write_or_print(plan_to_csv(plan), args.out)
    print(
        f"rows={len(plan.rows)} covered={plan.covered_tuples} "
        f"infeasible={plan.infeasible_tuples} backend={backend_name}",
        file=sys.stderr,
    )
    return 0


def cmd_rank(args) -> int:
    from .strategies import rank_stage

    schema = _load_schema(args.schema)
    env = _load_env(args.env, schema)
    registry = StateRegistry()
    ranked, dataset = rank_stage(
        schema, env, registry, args.seed,
        strength=args.strength, level_count=args.levels,
        clusters=args.clusters, top=args.top, weight=args.weight,
    )
    if ranked is None:
        print("not enough samples to rank options", file=sys.stderr)
        return 2
    for name, score in ranked.scores:
        marker = "*" if name in ranked.influential else " "
        print(f"{marker} {name}\t{score:.6f}")
    result = {
        "scores": [[name, score] for name, score in ranked.scores],
        "influential": list(ranked.influential),
        "weight": ranked.weight,
        "samples": len(dataset.records) if dataset else 0,
    }
    if args.ground_truth:
        truth = _load_ground_truth(args.ground_truth)
        exact = map_score(ranked.names, truth)
        result["map"] = float(exact)
        print(f"map={float(exact):.6f} ({exact})")
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2) + "\n")
    return 0


def cmd_tune(args) -> int:
    schema = _load_schema(args.schema)
    env = _load_env(args.env, schema)
    episodes = args.episodes
    if episodes is None and args.seconds is None:
        episodes = 100
    try:
        params = LearnerParams(
            alpha=args.alpha,
            gamma=args.gamma,
            epsilon0=args.epsilon0,
            epsilon_decay=args.epsilon_decay,
            epsilon_floor=args.epsilon_floor,
            steps_per_episode=args.steps_per_episode,
            episodes=episodes,
            seconds=args.seconds,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ground_truth = _load_ground_truth(args.ground_truth) if args.ground_truth else None
    try:
        report = run_strategy(
            args.strategy, schema, env, params, args.seed,
            increase_policy=args.increase_policy,
            initial_state=args.initial_state,
            ground_truth=ground_truth,
            strength=args.strength, level_count=args.levels,
            clusters=args.clusters, top=args.top, weight=args.weight,
        )
    finally:
        env.close()
    if args.report_out:
        report.save(args.report_out)
    if args.qtable_out:
        save_qtable(args.qtable_out, report.qtable, report.registry, schema)
    if args.curve_out:
        Path(args.curve_out).write_text(report.curve_csv())
    print(f"strategy={report.strategy} seed={report.seed} episodes={len(report.episodes)}")
    print(f"final_window_mean={report.final_window_mean():.3f} "
          f"best={report.best_measurement:.3f}")
    if report.p_goal is not None:
        converged = (
            "never" if report.converged_episode is None else str(report.converged_episode)
        )
        print(f"p_goal={report.p_goal:.3f} converged_episode={converged}")
    print(f"evaluations={report.evaluations} distinct_states={report.distinct_states} "
          f"merged_states={report.merged_states}")
    if report.influential:
        print("influential=" + ",".join(report.influential))
    if report.ranking_map is not None:
        print(f"map={report.ranking_map:.6f}")
    return 0


def cmd_replay(args) -> int:
    schema = _load_schema(args.schema)
    report = RunReport.load(args.report)
    if report.schema_digest != schema.digest():
        raise SchemaError("report was produced against a different schema")
    qtable = rebuild_qtable(report, 2 * len(schema))
    print(f"replayed {len(report.transitions)} transitions "
          f"over {len(qtable)} states")
    if args.qtable_out:
        registry = StateRegistry()
        save_qtable(args.qtable_out, qtable, registry, schema)
    if args.check:
        stored, _ = load_qtable(args.check, schema)
        if not qtable.equals(stored, atol=1e-12):
            print("replayed table does not match the stored table", file=sys.stderr)
            return 1
        print("replayed table matches the stored table")
    return 0


def cmd_compare(args) -> int:
    reports = [RunReport.load(path) for path in args.reports]
    try:
        rows = compare(reports, window=args.window)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None
    header = (
        f"{'strategy':<10} {'seed':>5} {'final':>12} {'best':>12} "
        f"{'converged':>9} {'states':>7} {'merged':>7} {'evals':>7} {'gain':>8}"
    )
    print(header)
    for row in rows:
        converged = "-" if row.converged_episode is None else str(row.converged_episode)
        gain = "-" if row.gain_vs_baseline is None else f"{row.gain_vs_baseline:+.1%}"
        print(
            f"{row.strategy:<10} {row.seed:>5} {row.final_window_mean:>12.3f} "
            f"{row.best_measurement:>12.3f} {converged:>9} {row.distinct_states:>7} "
            f"{row.merged_states:>7} {row.evaluations:>7} {gain:>8}"
        )
    return 0


def cmd_synth_gen(args) -> int:
    schema = _load_schema(args.schema)
    try:
        spec = random_synth_spec(
            schema, args.seed,
            influential=args.influential,
            base=args.base,
            contribution_scale=args.contribution_scale,
            interactions=args.interactions,
            noise_sigma=args.noise_sigma,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    doc = synth_spec_to_doc(spec)
    _write_or_print(json.dumps(doc, indent=2) + "\n", args.out)
    planted = sorted({e.condition.option for e in spec.effects})
    if args.ground_truth_out:
        Path(args.ground_truth_out).write_text(json.dumps(planted, indent=2) + "\n")
    _, goal = synth_best(spec, schema)
    print(f"planted={','.join(planted)}", file=sys.stderr)
    print(f"p_goal={goal:.3f}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="conftuner",
                     description="Configuration performance auto-tuner")
    parser.add_argument("--version", action="version",
                        version=f"conftuner {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="build a constraint-aware covering array")
    p.add_argument("--schema", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_sampling_flags(p)
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("rank", help="rank options by performance influence")
    p.add_argument("--schema", required=True)
    p.add_argument("--env", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_sampling_flags(p)
    _add_ranking_flags(p)
    p.add_argument("--ground-truth", help="JSON list of truly influential options")
    p.add_argument("--out", help="write ranking JSON here")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("tune", help="run a tuning strategy")
    p.add_argument("--schema", required=True)
    p.add_argument("--env", required=True)
    p.add_argument("--strategy", choices=sorted(STRATEGIES), default="confrl")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--seconds", type=float, default=None)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--epsilon0", type=float, default=0.3)
    p.add_argument("--epsilon-decay", type=float, default=0.99)
    p.add_argument("--epsilon-floor", type=float, default=0.01)
    p.add_argument("--steps-per-episode", type=int, default=10)
    p.add_argument("--increase-policy", choices=INCREASE_POLICIES,
                   default=DOUBLE_THEN_CEIL)
    p.add_argument("--initial-state", default="default",
                   help='"default", "random", or "file:<path>"')
    _add_sampling_flags(p)
    _add_ranking_flags(p)
    p.add_argument("--ground-truth", help="JSON list of truly influential options")
    p.add_argument("--report-out", help="write the run report JSON here")
    p.add_argument("--qtable-out", help="write the learned QTable JSON here")
    p.add_argument("--curve-out", help="write the learning-curve CSV here")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("replay", help="rebuild a QTable from a report")
    p.add_argument("--schema", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--qtable-out", help="write the rebuilt QTable here")
    p.add_argument("--check", help="stored QTable JSON to verify against")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("compare", help="compare run reports side by side")
    p.add_argument("reports", nargs="+")
    p.add_argument("--window", type=int, default=10)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth-gen", help="generate a synthetic environment spec")
    p.add_argument("--schema", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--influential", type=int, default=5)
    p.add_argument("--interactions", type=int, default=0)
    p.add_argument("--base", type=float, default=1000.0)
    p.add_argument("--contribution-scale", type=float, default=0.1)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--out", help="write the environment JSON here")
    p.add_argument("--ground-truth-out", help="write the planted option names here")
    p.set_defaults(func=cmd_synth_gen)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except EnvironmentFailure as exc:
        print(f"environment failure: {exc}", file=sys.stderr)
        return 3
    except ConftunerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
