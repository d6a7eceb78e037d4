"""k-means (k-means++ seeding, Lloyd iterations, restarts) and an exhaustive oracle."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import stream
from .errors import CapacityError, InputError, ShapeError

MAX_ENUMERATION = 10 ** 6


@dataclass
class ClusterModel:
    centroids: np.ndarray
    assignment: np.ndarray
    inertia: float
    iterations_run: int
    inertia_history: list[float] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_clusters)


def squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """``N x n`` squared Euclidean distances, computed by direct differencing."""
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def inertia_of(points: np.ndarray, centroids: np.ndarray, assignment: np.ndarray) -> float:
    diff = points - centroids[assignment]
    return float(np.einsum("ij,ij->", diff, diff))


def assign_nearest(centroids, point) -> int:
    """Index of the closest centroid; ties go to the lowest index."""
    c = np.asarray(centroids, dtype=np.float64)
    p = np.asarray(point, dtype=np.float64).reshape(-1)
    if c.ndim != 2 or c.shape[1] != p.shape[0]:
        raise ShapeError(f"point of dim {p.shape[0]} vs centroids {c.shape}")
    return int(np.argmin(np.sum((c - p) ** 2, axis=1)))


def assign_all(centroids: np.ndarray, points: np.ndarray) -> np.ndarray:
    c = np.asarray(centroids, dtype=np.float64)
    x = np.asarray(points, dtype=np.float64)
    if c.ndim != 2 or x.ndim != 2 or c.shape[1] != x.shape[1]:
        raise ShapeError(f"points {x.shape} vs centroids {c.shape}")
    return np.argmin(squared_distances(x, c), axis=1)


def kmeans_plusplus(points: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Seed ``n`` centroids by D^2 sampling."""
    N = points.shape[0]
    centroids = np.empty((n, points.shape[1]))
    centroids[0] = points[rng.integers(N)]
    closest = np.sum((points - centroids[0]) ** 2, axis=1)
    for k in range(1, n):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(N, p=closest / total))
        else:
            idx = int(rng.integers(N))
        centroids[k] = points[idx]
        closest = np.minimum(closest, np.sum((points - centroids[k]) ** 2, axis=1))
    return centroids


def _repair_empty(points, centroids, assignment, n) -> bool:
    """Move each empty centroid onto the point farthest from its own centroid."""
    counts = np.bincount(assignment, minlength=n)
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return False
    dist = np.sum((points - centroids[assignment]) ** 2, axis=1)
    for k in empty:
        # only steal from clusters that would stay nonempty
        donors = counts[assignment] > 1
        if not donors.any():
            break
        cand = np.where(donors, dist, -1.0)
        idx = int(np.argmax(cand))
        if cand[idx] <= 0:
            break  # every remaining point sits on its centroid
        counts[assignment[idx]] -= 1
        counts[k] += 1
        assignment[idx] = k
        centroids[k] = points[idx]
        dist[idx] = 0.0
    return True


def _lloyd(points, centroids, max_iter, tol):
    n = centroids.shape[0]
    history = []
    it = 0
    assignment = assign_all(centroids, points)
    for it in range(1, max_iter + 1):
        _repair_empty(points, centroids, assignment, n)
        history.append(inertia_of(points, centroids, assignment))
        new = centroids.copy()
        for k in range(n):
            members = assignment == k
            if members.any():
                new[k] = points[members].mean(axis=0)
        shift = float(np.max(np.sqrt(np.sum((new - centroids) ** 2, axis=1))))
        centroids = new
        history.append(inertia_of(points, centroids, assignment))
        assignment = assign_all(centroids, points)
        if shift < tol:
            break
    _repair_empty(points, centroids, assignment, n)
    for k in range(n):
        members = assignment == k
        if members.any():
            centroids[k] = points[members].mean(axis=0)
    final = inertia_of(points, centroids, assignment)
    history.append(final)
    return centroids, assignment, final, it, history


def kmeans(points, n: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-6,
           n_init: int = 5) -> ClusterModel:
    """Best-of-``n_init`` Lloyd runs from k-means++ seeds (lowest inertia wins)."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"points must be N x d, got {x.shape}")
    if n < 1 or x.shape[0] < n:
        raise InputError(f"need 1 <= n <= N, got n={n}, N={x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InputError("points contain non-finite values")
    best = None
    for restart in range(max(1, n_init)):
        rng = stream(seed, "kmeans", restart)
        c, a, inertia, iters, hist = _lloyd(x, kmeans_plusplus(x, n, rng), max_iter, tol)
        if best is None or inertia < best.inertia:
            best = ClusterModel(c, a, inertia, iters, hist)
    return best


def exhaustive_min_sse(points, n: int, chunk: int = 1 << 14) -> tuple[np.ndarray, float]:
    """Globally optimal ``n``-clustering by enumerating all ``n**N`` labelings."""
    x = np.asarray(points, dtype=np.float64)
    N = x.shape[0]
    if n < 1 or N < 1:
        raise InputError("need n >= 1 and at least one point")
    if n ** N > MAX_ENUMERATION:
        raise CapacityError(f"{n}**{N} labelings exceeds the budget of {MAX_ENUMERATION}")
    sq = np.sum(x * x, axis=1)
    total = n ** N
    powers = n ** np.arange(N - 1, -1, -1)
    best_sse, best_code = np.inf, 0
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total))
        labels = (codes[:, None] // powers[None, :]) % n
        sse = np.zeros(codes.shape[0])
        for k in range(n):
            mask = (labels == k).astype(np.float64)
            cnt = mask.sum(axis=1)
            sums = mask @ x
            within = mask @ sq - np.divide(np.sum(sums * sums, axis=1), cnt,
                                           out=np.zeros_like(cnt), where=cnt > 0)
            sse += within
        i = int(np.argmin(sse))
        if sse[i] < best_sse - 1e-12:
            best_sse, best_code = sse[i], int(codes[i])
    labels = (best_code // powers) % n
    # recompute directly to avoid cancellation in the sum-of-squares identity
    centroids = np.array([x[labels == k].mean(axis=0) if np.any(labels == k) else np.zeros(x.shape[1])
                          for k in range(n)])
    return labels, inertia_of(x, centroids, labels)


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected Rand index between two labelings."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError("labelings differ in length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)

    def comb2(v):
        return np.sum(v * (v - 1) / 2.0)

    index = comb2(table)
    rows, cols = comb2(table.sum(1)), comb2(table.sum(0))
    total = comb2(np.array([a.size]))
    expected = rows * cols / total if total else 0.0
    maximum = 0.5 * (rows + cols)
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))
