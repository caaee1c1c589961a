"""Performance-influence ranking of configuration options.

Sampled configurations are clustered on their normalized option values;
the clusters' measured performance then singles out the best and worst
groups, and the options whose normalized values differ most between
those two groups rank as the most performance-influential and receive
boosted exploration weights.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .constraints import ON
from .schema import BINARY, Configuration, Schema

DEFAULT_CLUSTERS = 5
DEFAULT_TOP = 10
DEFAULT_WEIGHT = 10.0


@dataclass(frozen=True)
class PerfDataset:
    """Configurations paired with their measured performance."""

    schema: Schema
    records: tuple[tuple[Configuration, float], ...]

    def __post_init__(self):
        for config, measurement in self.records:
            if config.schema != self.schema:
                raise ValueError("record configuration does not match the dataset schema")
            if not math.isfinite(measurement) or measurement < 0:
                raise ValueError(f"measurement {measurement!r} must be finite and >= 0")

    @property
    def measurements(self) -> np.ndarray:
        return np.array([m for _, m in self.records], dtype=np.float64)


@dataclass(frozen=True)
class RankedOptions:
    """Options ordered by influence score, most influential first."""

    scores: tuple[tuple[str, float], ...]
    influential: tuple[str, ...]
    weight: float

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.scores)

    def weights_for(self, schema: Schema) -> tuple[float, ...]:
        boosted = set(self.influential)
        return tuple(
            self.weight if option.name in boosted else 1.0
            for option in schema.options
        )


def normalize(dataset: PerfDataset) -> np.ndarray:
    """Feature matrix of normalized option values, one row per record.

    Binary values map to 0/1; numerical columns are min-max scaled over
    the observed values; constant columns become all zeros.
    """
    options = dataset.schema.options
    matrix = np.zeros((len(dataset.records), len(options)), dtype=np.float64)
    for j, option in enumerate(options):
        if option.kind == BINARY:
            column = np.array(
                [1.0 if config[option.name] == ON else 0.0 for config, _ in dataset.records]
            )
        else:
            column = np.array(
                [float(config[option.name]) for config, _ in dataset.records]
            )
            low, high = column.min(), column.max()
            if high > low:
                column = (column - low) / (high - low)
            else:
                column = np.zeros_like(column)
        matrix[:, j] = column
    return matrix


def cluster(dataset: PerfDataset, k: int = DEFAULT_CLUSTERS, seed: int = 0,
            max_iter: int = 100) -> np.ndarray:
    """K-Means cluster assignment over the normalized feature matrix.

    Centroids are seeded with distance-squared weighted sampling; Lloyd
    iterations stop when assignments are stable or after max_iter rounds.
    """
    matrix = normalize(dataset)
    n = matrix.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} not in [1, {n}]")
    rng = np.random.default_rng(seed)
    centroids = np.empty((k, matrix.shape[1]), dtype=np.float64)
    centroids[0] = matrix[rng.integers(n)]
    for i in range(1, k):
        distances = ((matrix[:, None, :] - centroids[None, :i, :]) ** 2).sum(axis=2)
        nearest = distances.min(axis=1)
        total = nearest.sum()
        if total > 0:
            probabilities = nearest / total
            centroids[i] = matrix[rng.choice(n, p=probabilities)]
        else:
            centroids[i] = matrix[rng.integers(n)]

    labels = _assign(matrix, centroids)
    for _ in range(max_iter):
        for j in range(k):
            members = matrix[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
        new_labels = _assign(matrix, centroids)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels


def _assign(matrix: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    distances = ((matrix[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return distances.argmin(axis=1)


def rank_options(dataset: PerfDataset, assignment: np.ndarray,
                 top: int = DEFAULT_TOP, weight: float = DEFAULT_WEIGHT) -> RankedOptions:
    """Score options by contrast between the best and worst clusters.

    score(option) = |mean normalized value in the highest-performing
    cluster - mean in the lowest-performing cluster|. Ties keep schema
    order. The ``top`` options get exploration weight ``weight``.
    """
    assignment = np.asarray(assignment)
    if len(assignment) != len(dataset.records):
        raise ValueError("assignment length does not match the dataset")
    labels = np.unique(assignment)
    if len(labels) < 2:
        raise ValueError("need at least two non-empty clusters to rank options")
    measurements = dataset.measurements
    cluster_means = np.array([measurements[assignment == l].mean() for l in labels])
    high = labels[int(np.argmax(cluster_means))]
    low = labels[int(np.argmin(cluster_means))]
    matrix = normalize(dataset)
    contrast = np.abs(
        matrix[assignment == high].mean(axis=0) - matrix[assignment == low].mean(axis=0)
    )
    order = np.argsort(-contrast, kind="stable")
    names = dataset.schema.names
    scores = tuple((names[i], float(contrast[i])) for i in order)
    influential = tuple(names[i] for i in order[: max(0, top)])
    return RankedOptions(scores=scores, influential=influential, weight=float(weight))


def reweighted_schema(schema: Schema, ranked: RankedOptions) -> Schema:
    """Schema copy whose influential options carry the boosted weight."""
    boosted = set(ranked.influential)
    options = tuple(
        dataclasses.replace(
            option, weight=ranked.weight if option.name in boosted else 1.0
        )
        for option in schema.options
    )
    return Schema(options, schema.constraints)


def map_score(ranked_names: Sequence[str], relevant: Iterable[str]) -> Fraction:
    """Mean average precision of a ranked list against the relevant set.

    Exact rational: the mean over relevant items of (hits so far / rank
    position) at each relevant hit; relevant items never retrieved
    contribute zero precision.
    """
    relevant_set = set(relevant)
    if not relevant_set:
        raise ValueError("relevant set is empty")
    if len(ranked_names) != len(set(ranked_names)):
        raise ValueError("ranked list contains duplicates")
    hits = 0
    total = Fraction(0)
    for position, name in enumerate(ranked_names, start=1):
        if name in relevant_set:
            hits += 1
            total += Fraction(hits, position)
    return total / len(relevant_set)
