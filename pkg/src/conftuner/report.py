"""Run reports: per-episode series, transitions, and merge events.

A report serializes to a single JSON document and its learning curve
exports to CSV with one row per episode.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

REPORT_FORMAT = "conftuner-report/v1"

CURVE_COLUMNS = (
    "episode",
    "seconds",
    "epsilon",
    "mean_measurement",
    "best_measurement",
    "distinct_states",
    "merged_states",
    "evaluations",
)


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    seconds: float
    epsilon: float
    mean_measurement: float
    best_measurement: float
    distinct_states: int
    merged_states: int
    evaluations: int


@dataclass(frozen=True)
class Transition:
    episode: int
    step: int
    state: str
    action: int
    next_state: str
    measurement: float
    reward: float
    changed: bool


@dataclass(frozen=True)
class MergeEvent:
    episode: int
    master: str
    slave: str


def convergence_episode(means: list[float], goal: float, ratio: float = 0.9) -> int | None:
    """First episode from which the mean measurement reaches ratio * goal
    and never drops below it again; None if that never happens."""
    threshold = ratio * goal
    converged: int | None = None
    for i, mean in enumerate(means):
        if mean >= threshold:
            if converged is None:
                converged = i
        else:
            converged = None
    return converged


@dataclass
class RunReport:
    """Everything one tuning run produced."""

    strategy: str
    seed: int
    schema_digest: str
    env_digest: str
    params: dict[str, Any]
    episodes: list[EpisodeRecord] = field(default_factory=list)
    transitions: list[Transition] = field(default_factory=list)
    merge_events: list[MergeEvent] = field(default_factory=list)
    p_goal: float | None = None
    converged_episode: int | None = None
    ranking: list[list[Any]] | None = None  # [name, score] pairs, best first
    influential: list[str] | None = None
    ranking_map: float | None = None
    best_measurement: float = 0.0
    best_values: dict[str, Any] | None = None
    evaluations: int = 0
    distinct_states: int = 0
    merged_states: int = 0

    def mean_series(self) -> list[float]:
        return [e.mean_measurement for e in self.episodes]

    def final_window_mean(self, window: int = 10) -> float:
        """Mean of the per-episode means over the last ``window`` episodes."""
        if not self.episodes:
            raise ValueError("report has no episodes")
        tail = self.episodes[-window:]
        return sum(e.mean_measurement for e in tail) / len(tail)

    def finalize(self, ratio: float = 0.9) -> None:
        if self.p_goal is not None:
            self.converged_episode = convergence_episode(
                self.mean_series(), self.p_goal, ratio
            )

    def curve_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(CURVE_COLUMNS)
        for record in self.episodes:
            writer.writerow([getattr(record, column) for column in CURVE_COLUMNS])
        return buffer.getvalue()

    def to_doc(self, include_timing: bool = True) -> dict:
        doc = {
            "format": REPORT_FORMAT,
            "strategy": self.strategy,
            "seed": self.seed,
            "schema_digest": self.schema_digest,
            "env_digest": self.env_digest,
            "params": dict(self.params),
            "p_goal": self.p_goal,
            "converged_episode": self.converged_episode,
            "ranking": self.ranking,
            "influential": self.influential,
            "ranking_map": self.ranking_map,
            "best_measurement": self.best_measurement,
            "best_values": self.best_values,
            "evaluations": self.evaluations,
            "distinct_states": self.distinct_states,
            "merged_states": self.merged_states,
            "episodes": [asdict(e) for e in self.episodes],
            "transitions": [asdict(t) for t in self.transitions],
            "merge_events": [asdict(m) for m in self.merge_events],
        }
        if not include_timing:
            for entry in doc["episodes"]:
                entry.pop("seconds")
        return doc

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_doc(include_timing), indent=2) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_doc(cls, doc: dict) -> "RunReport":
        if doc.get("format") != REPORT_FORMAT:
            raise ValueError(f"not a {REPORT_FORMAT} document")
        report = cls(
            strategy=doc["strategy"],
            seed=int(doc["seed"]),
            schema_digest=doc["schema_digest"],
            env_digest=doc["env_digest"],
            params=dict(doc.get("params", {})),
            p_goal=doc.get("p_goal"),
            converged_episode=doc.get("converged_episode"),
            ranking=doc.get("ranking"),
            influential=doc.get("influential"),
            ranking_map=doc.get("ranking_map"),
            best_measurement=float(doc.get("best_measurement", 0.0)),
            best_values=doc.get("best_values"),
            evaluations=int(doc.get("evaluations", 0)),
            distinct_states=int(doc.get("distinct_states", 0)),
            merged_states=int(doc.get("merged_states", 0)),
        )
        report.episodes = [
            EpisodeRecord(**{**entry, "seconds": entry.get("seconds", 0.0)})
            for entry in doc.get("episodes", [])
        ]
        report.transitions = [Transition(**entry) for entry in doc.get("transitions", [])]
        report.merge_events = [MergeEvent(**entry) for entry in doc.get("merge_events", [])]
        return report

    @classmethod
    def load(cls, path: str | Path) -> "RunReport":
        return cls.from_doc(json.loads(Path(path).read_text()))
