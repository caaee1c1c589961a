"""State bookkeeping: identity, performance cache, and master/slave merging.

States that measure the same (after rounding) are merged: the earliest
one becomes the master and later ones become slaves. Lookups resolve
slaves to masters, so a merged state is never re-measured and its Q-row
folds into the master's. Merging only ever happens between episodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .schema import Configuration, StateId, state_id


@dataclass
class MergeSummary:
    """Outcome of one merge pass: newly created slave links per master."""

    merged: dict[StateId, list[StateId]] = field(default_factory=dict)

    @property
    def slave_count(self) -> int:
        return sum(len(v) for v in self.merged.values())


class StateRegistry:
    """Tracks every state seen, its measurement, and merge structure.

    merge_decimals controls the measurement rounding used as the merge
    key (0 rounds to whole units).
    """

    def __init__(self, merge_decimals: int = 0):
        self.merge_decimals = merge_decimals
        self.states: dict[StateId, Configuration] = {}
        self.perf_cache: dict[StateId, float] = {}
        self.slave_to_master: dict[StateId, StateId] = {}
        self.perf_to_master: dict[float, StateId] = {}
        self.evaluations = 0

    def merge_key(self, measurement: float) -> float:
        return round(measurement, self.merge_decimals)

    def register(self, config: Configuration) -> StateId:
        """Record the state if unseen; returns its raw id."""
        sid = state_id(config)
        self.states.setdefault(sid, config)
        return sid

    def resolve(self, sid: StateId) -> StateId:
        """Master id for a state (identity for unmerged states)."""
        return self.slave_to_master.get(sid, sid)

    def measurement_of(self, sid: StateId) -> float | None:
        return self.perf_cache.get(self.resolve(sid))

    def get_or_measure(self, config: Configuration, env) -> tuple[StateId, float]:
        """Measurement for the state, evaluating the environment on a miss.

        Returns (resolved state id, measurement). Each canonical state is
        evaluated at most once; repeat visits are cache hits.
        """
        raw = self.register(config)
        sid = self.resolve(raw)
        if sid in self.perf_cache:
            return sid, self.perf_cache[sid]
        measurement = float(env.evaluate(config))
        self.perf_cache[sid] = measurement
        self.evaluations += 1
        return sid, measurement

    def merge_states(self, qtable=None) -> MergeSummary:
        """Merge equal-measurement states; masters keep their identity.

        The first state seen with a given rounded measurement is (or stays)
        the master for that measurement. If a QTable is given, each new
        slave's row folds into its master's by element-wise max and the
        slave row is dropped.
        """
        summary = MergeSummary()
        for sid, measurement in list(self.perf_cache.items()):
            if sid in self.slave_to_master:
                continue
            key = self.merge_key(measurement)
            master = self.perf_to_master.setdefault(key, sid)
            if master == sid:
                continue
            self.slave_to_master[sid] = master
            summary.merged.setdefault(master, []).append(sid)
            if qtable is not None:
                qtable.fold_max(sid, master)
        return summary

    @property
    def merged_states(self) -> int:
        return len(self.slave_to_master)

    @property
    def distinct_states(self) -> int:
        """Canonical states: every state seen minus merged-away slaves."""
        return len(self.states) - len(self.slave_to_master)

    def snapshot(self) -> dict:
        return {
            "merge_decimals": self.merge_decimals,
            "evaluations": self.evaluations,
            "perf_cache": dict(self.perf_cache),
            "slave_to_master": dict(self.slave_to_master),
            "perf_to_master": {repr(k): v for k, v in self.perf_to_master.items()},
        }

    @classmethod
    def from_snapshot(cls, doc: dict, states: dict[StateId, Configuration]) -> "StateRegistry":
        registry = cls(merge_decimals=int(doc.get("merge_decimals", 0)))
        registry.states = dict(states)
        registry.perf_cache = {k: float(v) for k, v in doc["perf_cache"].items()}
        registry.slave_to_master = dict(doc["slave_to_master"])
        registry.perf_to_master = {
            float(k): v for k, v in doc.get("perf_to_master", {}).items()
        }
        registry.evaluations = int(doc.get("evaluations", len(registry.perf_cache)))
        return registry
