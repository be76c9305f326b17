"""
Size-penalized ("adaptive") k-means over one-dimensional layer features.

The objective over clusters C_1..C_K with means μ_j is

    Σ_j [ Σ_{x ∈ C_j} (x - μ_j)^2 + λ (|C_j| - N/K)^2 ]

Points are moved one at a time to the cluster that lowers this objective the most,
evaluating the exact change (centroid shift and size penalty). Empty clusters are
allowed and keep their last centroid.
"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from apps.core.exceptions import ClusteringError
from apps.quantization.quantizer import VALID_BITS

logger = logging.getLogger(__name__)

MAX_ROUNDS = 100
DEFAULT_RESTARTS = 8
MOVE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ClusterAssignment:
    assignment: tuple[int, ...]
    centroids: tuple[float, ...]
    lam: float
    objective: float
    rounds: int = 0

    @property
    def k(self) -> int:
        return len(self.centroids)

    @property
    def sizes(self) -> tuple[int, ...]:
        counts = np.bincount(np.asarray(self.assignment, dtype=np.int64), minlength=self.k)
        return tuple(int(c) for c in counts)


def cluster_objective(
    features: Sequence[float],
    assignment: Sequence[int],
    centroids: Sequence[float],
    lam: float,
) -> float:
    """Distortion against the given centroids plus λ Σ_j (|C_j| - N/K)^2 over all K clusters."""
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(assignment, dtype=np.int64)
    mu = np.asarray(centroids, dtype=np.float64)
    k = len(mu)
    ideal = len(x) / k
    sizes = np.bincount(labels, minlength=k)
    distortion = float(np.sum((x - mu[labels]) ** 2))
    return distortion + lam * float(np.sum((sizes - ideal) ** 2))


def _validate(x: np.ndarray, k: int, lam: float):
    if x.ndim != 1 or x.size == 0:
        raise ClusteringError("features must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(x)):
        raise ClusteringError("features must be finite")
    if k < 1 or k > x.size:
        raise ClusteringError(f"K must satisfy 1 <= K <= N, got K={k}, N={x.size}")
    if lam < 0 or not np.isfinite(lam):
        raise ClusteringError(f"lambda must be a finite value >= 0, got {lam}")


def quantile_centroids(x: np.ndarray, k: int) -> np.ndarray:
    """K evenly spaced quantiles of the sorted features."""
    ordered = np.sort(x)
    n = len(ordered)
    return np.array([ordered[int(np.floor((j + 0.5) * n / k))] for j in range(k)], dtype=np.float64)


def _nearest(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin returns the first minimum, so ties go to the lower cluster index
    return np.argmin((x[:, None] - centroids[None, :]) ** 2, axis=1)


def _move_delta(xi: float, a: int, b: int, sizes: np.ndarray, means: np.ndarray, lam: float, ideal: float) -> float:
    na, nb = sizes[a], sizes[b]
    removal = na / (na - 1) * (xi - means[a]) ** 2 if na > 1 else 0.0
    insertion = nb / (nb + 1) * (xi - means[b]) ** 2 if nb > 0 else 0.0
    penalty = (
        ((na - 1) - ideal) ** 2 - (na - ideal) ** 2
        + ((nb + 1) - ideal) ** 2 - (nb - ideal) ** 2
    )
    return insertion - removal + lam * penalty


def _local_search(x: np.ndarray, centroids: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray, int]:
    k = len(centroids)
    ideal = len(x) / k
    labels = _nearest(x, centroids)
    means = centroids.copy()
    sizes = np.bincount(labels, minlength=k).astype(np.int64)
    for j in range(k):
        if sizes[j]:
            means[j] = x[labels == j].mean()

    order = np.argsort(x, kind='stable')
    rounds = 0
    for rounds in range(1, MAX_ROUNDS + 1):
        moved = False
        for i in order:
            a = labels[i]
            best_b, best_delta = a, -MOVE_TOLERANCE
            for b in range(k):
                if b == a:
                    continue
                delta = _move_delta(x[i], a, b, sizes, means, lam, ideal)
                if delta < best_delta:
                    best_b, best_delta = b, delta
            if best_b == a:
                continue

            xi = x[i]
            na, nb = sizes[a], sizes[best_b]
            if na > 1:
                means[a] = (means[a] * na - xi) / (na - 1)
            means[best_b] = xi if nb == 0 else (means[best_b] * nb + xi) / (nb + 1)
            sizes[a] -= 1
            sizes[best_b] += 1
            labels[i] = best_b
            moved = True
        if not moved:
            break

    # Recompute means from scratch so the objective is exact
    for j in range(k):
        if sizes[j]:
            means[j] = x[labels == j].mean()
    return labels, means, rounds


def adaptive_kmeans(
    features: Sequence[float],
    k: int,
    lam: float,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
) -> ClusterAssignment:
    """
    Cluster 1-D `features` into `k` clusters under the size-penalized objective.

    Starts from the K quantiles of the sorted features, then from `restarts` seeded random
    picks of K distinct sorted features, and keeps the best result (earliest on ties).
    """
    x = np.asarray(features, dtype=np.float64)
    _validate(x, k, lam)

    ordered = np.sort(x)
    starts = [quantile_centroids(x, k)]
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(restarts if k > 1 else 0):
        starts.append(np.sort(ordered[rng.choice(len(ordered), size=k, replace=False)]))

    best = None
    for init in starts:
        labels, means, rounds = _local_search(x, init, lam)
        objective = cluster_objective(x, labels, means, lam)
        if best is None or objective < best.objective - MOVE_TOLERANCE:
            best = ClusterAssignment(
                assignment=tuple(int(c) for c in labels),
                centroids=tuple(float(m) for m in means),
                lam=float(lam),
                objective=objective,
                rounds=rounds,
            )

    logger.debug(
        f"Clustered {len(x)} features into {k} clusters",
        extra={'extra_data': {'lambda': lam, 'sizes': list(best.sizes), 'objective': best.objective}},
    )
    return best


def cluster_bits(clusters: ClusterAssignment, bitset: Sequence[int] = VALID_BITS) -> list[int]:
    """
    Bitwidth per feature. Distinct centroids of non-empty clusters, in ascending order,
    take the top of the ascending bit set, so the largest-centroid cluster always gets the
    widest bits. Clusters sharing a centroid share bits.
    """
    bitset = sorted(bitset)
    if clusters.k > len(bitset):
        raise ClusteringError(f"{clusters.k} clusters but only {len(bitset)} bitwidths")
    centres = sorted({clusters.centroids[j] for j, size in enumerate(clusters.sizes) if size})
    available = bitset[len(bitset) - len(centres):]
    by_centre = dict(zip(centres, available))
    return [by_centre[clusters.centroids[c]] for c in clusters.assignment]
