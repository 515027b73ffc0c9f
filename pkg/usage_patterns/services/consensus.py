"""Model-order selection by consensus clustering.

For every candidate k the dataset is subsampled H times (label-stratified,
without replacement) and each subsample is clustered. The consensus matrix
holds, per pair of points, the fraction of runs sampling both in which they
shared a cluster. The area under the CDF of its entries measures how stable
the partition is; k is picked where that area stops growing.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

import numpy as np

from ..exceptions import ConfigurationError, DomainError
from .ca_cluster import ClusterConfig, fit_points

logger = logging.getLogger(__name__)

DEFAULT_FLATNESS_THRESHOLD = 0.025


@dataclass(frozen=True)
class ConsensusConfig:
    k_min: int = 2
    k_max: int = 6
    resamples: int = 50
    subsample_fraction: float = 0.8
    seed: int = 0
    flatness_threshold: float = DEFAULT_FLATNESS_THRESHOLD
    max_points: Optional[int] = 1000
    workers: int = 1

    def __post_init__(self):
        if not 2 <= self.k_min <= self.k_max:
            raise ConfigurationError(f"Need 2 <= k_min <= k_max, got k_min={self.k_min}, k_max={self.k_max}")
        if self.resamples < 2:
            raise ConfigurationError(f"resamples must be at least 2, got {self.resamples}")
        if not 0 < self.subsample_fraction <= 1:
            raise ConfigurationError(f"subsample_fraction must be in (0, 1], got {self.subsample_fraction}")
        if self.max_points is not None and self.max_points < self.k_max:
            raise ConfigurationError(f"max_points ({self.max_points}) must be at least k_max ({self.k_max})")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be at least 1, got {self.workers}")

    @property
    def ks(self):
        return tuple(range(self.k_min, self.k_max + 1))

    def to_dict(self):
        return {
            "k_min": self.k_min,
            "k_max": self.k_max,
            "resamples": self.resamples,
            "subsample_fraction": self.subsample_fraction,
            "seed": self.seed,
            "flatness_threshold": self.flatness_threshold,
            "max_points": self.max_points,
            "workers": self.workers,
        }


@dataclass(frozen=True)
class ConsensusMatrix:
    k: int
    values: np.ndarray  # NaN where the pair was never co-sampled
    co_sample_counts: np.ndarray
    point_indices: np.ndarray  # dataset index of each row, ascending

    @property
    def defined(self):
        return self.co_sample_counts > 0

    @property
    def never_co_sampled(self):
        upper = np.triu(~self.defined, k=1)
        return int(upper.sum())

    def upper_entries(self):
        i, j = np.triu_indices(len(self.values), k=1)
        entries = self.values[i, j]
        return entries[~np.isnan(entries)]


@dataclass(frozen=True)
class ConsensusCurve:
    ks: Tuple[int, ...]
    areas: Mapping[int, float]
    deltas: Mapping[int, float]
    chosen_k: int
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    def rows(self):
        return [(k, self.areas[k], self.deltas[k], k == self.chosen_k) for k in self.ks]

    def to_dict(self):
        def finite_or_none(value):
            return value if math.isfinite(value) else None

        return {
            "ks": list(self.ks),
            "areas": {str(k): self.areas[k] for k in self.ks},
            "deltas": {str(k): finite_or_none(self.deltas[k]) for k in self.ks},
            "chosen_k": self.chosen_k,
            "warnings": list(self.warnings),
        }


def consensus_cdf_area(entries):
    """Area under the empirical CDF of consensus entries, measured from 0.

    Sum over sorted unique values x_i (0 prepended) of (x_i - x_{i-1}) * CDF(x_i).
    Without the prepended 0 the sum would start at the smallest entry; with it,
    a matrix whose entries are all above 0 gains an extra x_min * CDF(x_min)
    term. That keeps a binary matrix at area 1 and every area in [0, 1].
    """
    entries = np.sort(np.asarray(entries, dtype=float))
    if entries.size == 0:
        return 0.0
    grid = np.unique(np.concatenate([[0.0], entries]))
    cdf = np.searchsorted(entries, grid, side="right") / entries.size
    return float(np.sum(np.diff(grid) * cdf[1:]))


def relative_deltas(areas):
    ks = sorted(areas)
    deltas = {ks[0]: areas[ks[0]]}
    for previous, k in zip(ks, ks[1:]):
        base = areas[previous]
        if base == 0:
            deltas[k] = math.inf if areas[k] > 0 else 0.0
        else:
            deltas[k] = (areas[k] - base) / base
    return deltas


def select_model_order(deltas, flatness_threshold=DEFAULT_FLATNESS_THRESHOLD):
    """Smallest k whose successor gains less than the threshold; argmax delta otherwise"""
    if isinstance(deltas, ConsensusCurve):
        deltas = deltas.deltas
    ks = sorted(deltas)
    if len(ks) < 2:
        raise DomainError("Model order selection needs at least two values of k")
    for k, successor in zip(ks, ks[1:]):
        if deltas[successor] < flatness_threshold:
            return k
    return max(ks, key=lambda k: (deltas[k], -k))


def _stratified_sample(labels, size, rng):
    """Sorted indices of a label-stratified sample without replacement (largest remainder allocation)"""
    groups = [np.flatnonzero(labels == label) for label in np.unique(labels)]
    n = len(labels)
    exact = [size * len(g) / n for g in groups]
    take = [min(len(g), max(1, math.floor(e))) for g, e in zip(groups, exact)]
    order = sorted(range(len(groups)), key=lambda i: (-(exact[i] - math.floor(exact[i])), i))
    while sum(take) < size:
        progressed = False
        for i in order:
            if sum(take) >= size:
                break
            if take[i] < len(groups[i]):
                take[i] += 1
                progressed = True
        if not progressed:
            break
    while sum(take) > size:
        i = max(range(len(groups)), key=lambda g: (take[g], -g))
        take[i] -= 1
    picked = [rng.choice(g, size=t, replace=False) for g, t in zip(groups, take) if t > 0]
    return np.sort(np.concatenate(picked))


def _canonical_order(features, labels, weights, periods):
    return np.lexsort((np.arange(len(features)), periods, weights, features, labels))


def _pair_counts(indicator):
    """Number of columns in which both rows are set, for every pair of rows"""
    return np.rint(indicator @ indicator.T).astype(np.int64)


def _run_once(task):
    k, run, seed, indices, features, labels, weights, template = task
    model = fit_points(features[indices], labels[indices], weights[indices], template.with_k(k))
    return k, run, seed, indices, np.asarray(model.assignment)


def run_consensus(dataset, cluster_template=None, config=None, run_log=None):
    """Consensus matrices per k and the resulting curve.

    Points are put in a canonical order before any sampling, so permuting the
    dataset permutes the matrices and leaves the curve unchanged. Run h draws
    its subsample with seed + h, so the same subsamples are reused for every
    k. Every run clusters with the template seed, so the resampling is the
    only thing that varies between runs.
    """
    cluster_template = cluster_template or ClusterConfig()
    config = config or ConsensusConfig()
    n_total = len(dataset)
    if n_total < config.k_max:
        raise DomainError(f"Consensus over k <= {config.k_max} needs at least {config.k_max} points, got {n_total}")

    order = _canonical_order(dataset.features, dataset.labels, dataset.weights, dataset.periods)
    features = np.asarray(dataset.features)[order]
    labels = np.asarray(dataset.labels)[order]
    weights = np.asarray(dataset.weights)[order]

    universe = np.arange(n_total)
    if config.max_points is not None and n_total > config.max_points:
        universe = _stratified_sample(labels, config.max_points, np.random.default_rng(config.seed))
        logger.info(f"Consensus restricted to a stratified sample of {len(universe)} of {n_total} points")
    n = len(universe)
    features, labels, weights = features[universe], labels[universe], weights[universe]

    subsample_size = math.ceil(config.subsample_fraction * n)
    if subsample_size < config.k_max:
        raise ConfigurationError(
            f"Subsamples of {subsample_size} points cannot hold k_max={config.k_max} clusters"
        )

    subsamples = []
    for run in range(config.resamples):
        seed = config.seed + run
        if subsample_size >= n:
            indices = np.arange(n)
        else:
            indices = _stratified_sample(labels, subsample_size, np.random.default_rng(seed))
        subsamples.append((run, seed, indices))

    tasks = [
        (k, run, seed, indices, features, labels, weights, cluster_template)
        for k in config.ks
        for run, seed, indices in subsamples
    ]
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            results = list(executor.map(_run_once, tasks))
    else:
        results = [_run_once(task) for task in tasks]

    # Indicator columns: one per run for sampling, one per (run, cluster) for
    # membership. Pair counts are then a single product M @ M.T.
    sampled = np.zeros((n, config.resamples))
    for run, _, indices in subsamples:
        sampled[indices, run] = 1.0
    membership = {k: np.zeros((n, config.resamples * k)) for k in config.ks}
    for k, run, seed, indices, assignment in results:
        membership[k][indices, run * k + assignment] = 1.0
        if run_log is not None:
            run_log.append(
                {
                    "k": k,
                    "run": run,
                    "sample_seed": seed,
                    "fit_seed": cluster_template.seed,
                    "indices": [int(i) for i in order[universe[indices]]],
                    "assignment": [int(c) for c in assignment],
                }
            )

    # back to the caller's point order
    position = order[universe]
    restore = np.argsort(position)
    point_indices = position[restore]
    point_indices.flags.writeable = False
    co_sample = _pair_counts(sampled[restore])
    co_sample.flags.writeable = False
    matrices = {}
    warnings = []
    for k in config.ks:
        counts = _pair_counts(membership[k][restore])
        with np.errstate(invalid="ignore", divide="ignore"):
            values = np.where(co_sample > 0, counts / np.where(co_sample > 0, co_sample, 1), np.nan)
        values.flags.writeable = False
        matrix = ConsensusMatrix(k=k, values=values, co_sample_counts=co_sample, point_indices=point_indices)
        if matrix.never_co_sampled:
            message = f"k={k}: {matrix.never_co_sampled} point pairs never co-sampled, excluded from the CDF"
            logger.warning(message)
            warnings.append(message)
        matrices[k] = matrix

    areas = {k: consensus_cdf_area(matrices[k].upper_entries()) for k in config.ks}
    deltas = relative_deltas(areas)
    chosen_k = select_model_order(deltas, config.flatness_threshold)
    curve = ConsensusCurve(ks=config.ks, areas=areas, deltas=deltas, chosen_k=chosen_k, warnings=tuple(warnings))
    logger.info(
        f"Consensus over k={config.k_min}..{config.k_max} with {config.resamples} resamples chose k={chosen_k}"
    )
    return matrices, curve
