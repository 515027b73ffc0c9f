"""Supervised clustering as a college admission game.

Centroids are the colleges: each holds at most its quota of points and ranks
points by distance. Points are the applicants: they rank centroids by how
pure the centroid is for their own label (frozen from the previous outer
iteration), breaking ties by distance. Every outer iteration runs
point-proposing deferred acceptance and then moves the centroids to the
weighted means of their members, until the assignment stops changing.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from ..exceptions import ConfigurationError, DomainError
from .profile_builder import weighted_mean_std

logger = logging.getLogger(__name__)

DEGENERATE_JITTER = 1e-9


class QuotaPolicy(str, Enum):
    BALANCED = "balanced"
    UNBOUNDED_CAP = "unbounded_cap"


class Distance(str, Enum):
    SQUARED_EUCLIDEAN = "squared_euclidean"
    ABSOLUTE = "absolute"


def _coerce(enum_type, value, key):
    try:
        return enum_type(str(getattr(value, "value", value)).strip().lower().replace("-", "_"))
    except ValueError:
        choices = ", ".join(member.value for member in enum_type)
        raise ConfigurationError(f"Invalid {key} '{value}', expected one of: {choices}") from None


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 2
    quota_policy: QuotaPolicy = QuotaPolicy.BALANCED
    max_outer_iters: int = 100
    seed: int = 0
    distance: Distance = Distance.SQUARED_EUCLIDEAN

    def __post_init__(self):
        object.__setattr__(self, "quota_policy", _coerce(QuotaPolicy, self.quota_policy, "quota_policy"))
        object.__setattr__(self, "distance", _coerce(Distance, self.distance, "distance"))
        if not (isinstance(self.k, int) and self.k >= 2):
            raise ConfigurationError(f"k must be an integer >= 2, got {self.k}")
        if not (isinstance(self.max_outer_iters, int) and self.max_outer_iters >= 1):
            raise ConfigurationError(f"max_outer_iters must be an integer >= 1, got {self.max_outer_iters}")

    def with_k(self, k, seed=None):
        return ClusterConfig(
            k=k,
            quota_policy=self.quota_policy,
            max_outer_iters=self.max_outer_iters,
            seed=self.seed if seed is None else seed,
            distance=self.distance,
        )

    def to_dict(self):
        return {
            "k": self.k,
            "quota_policy": self.quota_policy.value,
            "max_outer_iters": self.max_outer_iters,
            "seed": self.seed,
            "distance": self.distance.value,
        }


def quotas_for(n, k, policy=QuotaPolicy.BALANCED):
    policy = _coerce(QuotaPolicy, policy, "quota_policy")
    capacity = math.ceil(n / k) if policy is QuotaPolicy.BALANCED else n
    return np.full(k, capacity, dtype=int)


def _as_points(values):
    array = np.asarray(values, dtype=float)
    if array.ndim == 1:
        array = array.reshape(-1, 1)
    if array.ndim != 2:
        raise DomainError(f"Expected a 1-D or 2-D array of points, got shape {array.shape}")
    return array


def pairwise_distance(points, centroids, distance=Distance.SQUARED_EUCLIDEAN):
    """(n, k) matrix of point-to-centroid distances"""
    diff = _as_points(points)[:, None, :] - _as_points(centroids)[None, :, :]
    if _coerce(Distance, distance, "distance") is Distance.ABSOLUTE:
        return np.abs(diff).sum(axis=-1)
    return (diff**2).sum(axis=-1)


def _ranks_from_preferences(preferences):
    rows, cols = preferences.shape
    ranks = np.empty_like(preferences)
    ranks[np.arange(rows)[:, None], preferences] = np.arange(cols)[None, :]
    ranks.flags.writeable = False
    return ranks


@dataclass(frozen=True)
class PreferenceProfile:
    centroid_pref: np.ndarray  # (k, n) point indices, most preferred first
    point_pref: np.ndarray  # (n, k) centroid indices, most preferred first

    @property
    def n_points(self):
        return self.point_pref.shape[0]

    @property
    def n_centroids(self):
        return self.centroid_pref.shape[0]

    @cached_property
    def centroid_rank(self):
        return _ranks_from_preferences(self.centroid_pref)

    @cached_property
    def point_rank(self):
        return _ranks_from_preferences(self.point_pref)


@dataclass(frozen=True)
class ClusterStats:
    cluster_id: int
    mean: float
    std: float
    size: int
    weight: float
    purity: float
    majority_label: Optional[int]

    def to_dict(self):
        return {
            "cluster_id": self.cluster_id,
            "mean": self.mean,
            "std": self.std,
            "size": self.size,
            "weight": self.weight,
            "purity": self.purity,
            "majority_label": self.majority_label,
        }


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray
    assignment: np.ndarray
    clusters: Tuple[ClusterStats, ...]
    quotas: Tuple[int, ...]
    outer_iterations_used: int
    converged: bool
    config: ClusterConfig

    @property
    def k(self):
        return len(self.clusters)

    @property
    def sizes(self):
        return np.bincount(self.assignment, minlength=self.k)

    def canonicalized(self):
        """Same model with cluster ids ordered by ascending cluster mean"""
        keys = [c.mean if c.size else float(self.centroids[c.cluster_id]) for c in self.clusters]
        order = np.argsort(np.asarray(keys), kind="stable")
        relabel = np.empty(self.k, dtype=int)
        relabel[order] = np.arange(self.k)
        assignment = relabel[self.assignment]
        assignment.flags.writeable = False
        centroids = np.asarray(self.centroids)[order].copy()
        centroids.flags.writeable = False
        clusters = tuple(
            ClusterStats(
                cluster_id=new_id,
                mean=self.clusters[old].mean,
                std=self.clusters[old].std,
                size=self.clusters[old].size,
                weight=self.clusters[old].weight,
                purity=self.clusters[old].purity,
                majority_label=self.clusters[old].majority_label,
            )
            for new_id, old in enumerate(order)
        )
        return ClusterModel(
            centroids=centroids,
            assignment=assignment,
            clusters=clusters,
            quotas=tuple(self.quotas[old] for old in order),
            outer_iterations_used=self.outer_iterations_used,
            converged=self.converged,
            config=self.config,
        )

    def to_dict(self):
        return {
            "centroids": np.asarray(self.centroids).tolist(),
            "assignment": self.assignment.tolist(),
            "clusters": [c.to_dict() for c in self.clusters],
            "quotas": list(self.quotas),
            "outer_iterations_used": self.outer_iterations_used,
            "converged": self.converged,
            "config": self.config.to_dict(),
            "seed": self.config.seed,
        }


def initialize_centroids(points, k, seed, distance=Distance.SQUARED_EUCLIDEAN):
    """Greedy farthest-point seeding from a seeded random first point"""
    points = _as_points(points)
    n = len(points)
    if n < k:
        raise DomainError(f"Need at least k={k} points to seed centroids, got {n}")

    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    nearest = pairwise_distance(points, points[chosen], distance)[:, 0]
    for _ in range(1, k):
        candidate = int(np.argmax(nearest))
        if nearest[candidate] <= 0:
            # only duplicates of chosen points remain
            candidate = next(i for i in range(n) if i not in chosen)
        chosen.append(candidate)
        nearest = np.minimum(nearest, pairwise_distance(points, points[[candidate]], distance)[:, 0])

    centroids = points[chosen].copy()
    for j in range(1, k):
        while np.any(np.all(centroids[:j] == centroids[j], axis=1)):
            centroids[j] += np.maximum(DEGENERATE_JITTER, np.spacing(np.abs(centroids[j])))
            logger.warning(f"Seed point {chosen[j]} coincides with an earlier centroid, nudging it apart")
    return centroids


def cluster_purity(assignment, labels, k):
    """(k, L) matrix: fraction of each cluster's members carrying each label code"""
    _, codes = np.unique(np.asarray(labels), return_inverse=True)
    codes = codes.reshape(-1)
    n_labels = int(codes.max()) + 1 if codes.size else 0
    cells = np.asarray(assignment, dtype=int) * n_labels + codes
    counts = np.bincount(cells, minlength=k * n_labels).reshape(k, n_labels).astype(float)
    sizes = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        purity = np.where(sizes > 0, counts / np.where(sizes > 0, sizes, 1), 0.0)
    return purity, codes


def build_preferences(points, labels, centroids, previous_assignment=None, distance=Distance.SQUARED_EUCLIDEAN):
    points = _as_points(points)
    centroids = _as_points(centroids)
    n, k = len(points), len(centroids)
    if n == 0 or k == 0:
        raise DomainError("Preferences need at least one point and one centroid")

    dist = pairwise_distance(points, centroids, distance)
    centroid_pref = np.argsort(dist.T, axis=1, kind="stable")
    cluster_index = np.broadcast_to(np.arange(k), (n, k))
    if previous_assignment is None:
        point_pref = np.lexsort((cluster_index, dist), axis=-1)
    else:
        purity, codes = cluster_purity(previous_assignment, labels, k)
        point_purity = purity[:, codes].T
        point_pref = np.lexsort((cluster_index, dist, -point_purity), axis=-1)

    centroid_pref.flags.writeable = False
    point_pref.flags.writeable = False
    return PreferenceProfile(centroid_pref=centroid_pref, point_pref=point_pref)


def deferred_acceptance(profile, quotas):
    """Point-proposing deferred acceptance with centroid capacities.

    All free points propose simultaneously each round; every centroid keeps
    its best applicants up to quota. The result is the point-optimal stable
    matching, which does not depend on the proposal order.

    Each round sorts one integer key per point, centroid * n + rank of the
    point at that centroid, so a centroid's applicants come out contiguous and
    best first; whoever sits past the quota inside its block is rejected.
    """
    n, k = profile.n_points, profile.n_centroids
    quotas = np.asarray(quotas, dtype=int)
    if quotas.shape != (k,):
        raise DomainError(f"Expected {k} quotas, got {quotas.shape}")
    if quotas.sum() < n:
        raise DomainError(f"Quotas sum to {quotas.sum()}, cannot place {n} points")

    point_pref = profile.point_pref
    centroid_pref = profile.centroid_pref
    centroid_rank = profile.centroid_rank
    everyone = np.arange(n)
    next_choice = np.zeros(n, dtype=int)
    assignment = np.full(n, -1, dtype=int)
    free = everyone

    while free.size:
        if np.any(next_choice[free] >= k):
            raise DomainError("A point exhausted its preference list; quotas are inconsistent")
        assignment[free] = point_pref[free, next_choice[free]]
        # every point now holds a proposal
        keys = np.sort(assignment * n + centroid_rank[assignment, everyone])
        held_at, rank = np.divmod(keys, n)
        sizes = np.bincount(held_at, minlength=k)
        starts = np.cumsum(sizes) - sizes
        over = everyone - starts[held_at] >= quotas[held_at]
        free = centroid_pref[held_at[over], rank[over]]
        assignment[free] = -1
        next_choice[free] += 1

    return assignment


def find_blocking_pairs(profile, quotas, assignment):
    """(point, centroid) pairs that would both rather be matched to each other"""
    n, k = profile.n_points, profile.n_centroids
    quotas = np.asarray(quotas, dtype=int)
    assignment = np.asarray(assignment, dtype=int)
    point_rank = profile.point_rank
    centroid_rank = profile.centroid_rank
    held_rank = point_rank[np.arange(n), assignment]
    sizes = np.bincount(assignment, minlength=k)

    pairs = []
    for c in range(k):
        wants = point_rank[:, c] < held_rank
        if sizes[c] < quotas[c]:
            blocking = wants
        else:
            worst_held = centroid_rank[c, assignment == c].max()
            blocking = wants & (centroid_rank[c] < worst_held)
        pairs.extend((int(p), c) for p in np.flatnonzero(blocking))
    return sorted(pairs)


def update_centroids(points, assignment, k, weights=None, previous_centroids=None, distance=Distance.SQUARED_EUCLIDEAN):
    """Weighted member means; an empty cluster is re-seeded at the point farthest from its old centroid"""
    points = _as_points(points)
    assignment = np.asarray(assignment, dtype=int)
    weights = np.ones(len(points)) if weights is None else np.asarray(weights, dtype=float)

    sums = np.stack(
        [np.bincount(assignment, weights=points[:, d] * weights, minlength=k) for d in range(points.shape[1])],
        axis=1,
    )
    totals = np.bincount(assignment, weights=weights, minlength=k)

    centroids = np.empty((k, points.shape[1]))
    for c in range(k):
        if totals[c] > 0:
            centroids[c] = sums[c] / totals[c]
            continue
        if previous_centroids is None:
            raise DomainError(f"Cluster {c} is empty and has no previous centroid to re-seed from")
        previous = _as_points(previous_centroids)[[c]]
        farthest = int(np.argmax(pairwise_distance(points, previous, distance)[:, 0]))
        centroids[c] = points[farthest]
        logger.debug(f"Cluster {c} emptied, re-seeded at point {farthest}")
    return centroids


def _cluster_stats(features, labels, weights, assignment, k):
    purity, codes = cluster_purity(assignment, labels, k)
    label_values = np.unique(np.asarray(labels))
    stats = []
    for c in range(k):
        members = assignment == c
        size = int(members.sum())
        if size == 0:
            stats.append(ClusterStats(c, float("nan"), float("nan"), 0, 0.0, 0.0, None))
            continue
        mean, std = weighted_mean_std(features[members], weights[members])
        majority = int(np.argmax(purity[c]))
        stats.append(
            ClusterStats(
                cluster_id=c,
                mean=mean,
                std=std,
                size=size,
                weight=float(weights[members].sum()),
                purity=float(purity[c, majority]),
                majority_label=int(label_values[majority]),
            )
        )
    return tuple(stats)


def fit_points(features, labels, weights=None, config=None):
    """Fit on raw arrays: one speed per point, its label and its trip weight"""
    config = config or ClusterConfig()
    features = np.asarray(features, dtype=float)
    if features.ndim != 1:
        raise DomainError(f"Expected one feature per point, got shape {features.shape}")
    if not np.all(np.isfinite(features)):
        raise DomainError("Features must be finite")
    labels = np.asarray(labels)
    weights = np.ones(len(features)) if weights is None else np.asarray(weights, dtype=float)
    n, k = len(features), config.k
    if n < k:
        raise DomainError(f"Cannot form k={k} clusters from {n} points")

    points = features.reshape(-1, 1)
    quotas = quotas_for(n, k, config.quota_policy)
    centroids = initialize_centroids(points, k, config.seed, config.distance)
    assignment = None
    converged = False
    iteration = 0
    for iteration in range(1, config.max_outer_iters + 1):
        profile = build_preferences(points, labels, centroids, assignment, config.distance)
        matched = deferred_acceptance(profile, quotas)
        centroids = update_centroids(points, matched, k, weights, centroids, config.distance)
        if assignment is not None and np.array_equal(matched, assignment):
            converged = True
            break
        assignment = matched
    assignment = matched

    if logger.isEnabledFor(logging.DEBUG):
        logger.debug(f"k={k} on {n} points settled after {iteration} outer iterations")
    if not converged:
        logger.warning(f"Clustering did not converge within {config.max_outer_iters} outer iterations")

    assignment.flags.writeable = False
    final_centroids = centroids[:, 0].copy()
    final_centroids.flags.writeable = False
    return ClusterModel(
        centroids=final_centroids,
        assignment=assignment,
        clusters=_cluster_stats(features, labels, weights, assignment, k),
        quotas=tuple(int(q) for q in quotas),
        outer_iterations_used=iteration,
        converged=converged,
        config=config,
    )


def fit(dataset, config=None):
    config = config or ClusterConfig()
    try:
        model = fit_points(dataset.features, dataset.labels, dataset.weights, config)
    except DomainError as e:
        logger.error(f"Clustering failed for {len(dataset)} points: {str(e)}")
        raise
    logger.info(
        f"Fitted k={config.k} on {len(dataset)} points in {model.outer_iterations_used} outer iterations "
        f"(converged={model.converged})"
    )
    return model


def majority_period_coloring(model, dataset):
    """Map each period index to the cluster holding the plurality of its weight (lower id wins ties)"""
    periods = dataset.periods
    weights = dataset.weights
    coloring = {}
    for period in np.unique(periods):
        members = periods == period
        totals = np.bincount(model.assignment[members], weights=weights[members], minlength=model.k)
        coloring[int(period)] = int(np.argmax(totals))
    return coloring
