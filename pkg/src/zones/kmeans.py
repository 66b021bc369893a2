#!/usr/bin/env python3
"""
Seeded k-means (k-means++ initialization, Lloyd iterations).
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..errors import ConfigError, NumericalError


@dataclass
class KMeansResult:
    """Labels, centroids and the inertia after every assignment step."""
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations: int
    inertia_history: List[float] = field(default_factory=list)


def _sq_distances(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)


def kmeans_plus_plus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; when every remaining D^2 is zero the next seed is drawn uniformly."""
    n = X.shape[0]
    centroids = [X[int(rng.integers(n))]]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        idx = int(rng.integers(n)) if total <= 0 else int(rng.choice(n, p=d2 / total))
        centroids.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centroids, dtype=float)


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 100) -> KMeansResult:
    """
    Lloyd's k-means from k-means++ seeding.

    Args:
        points: (n,) scalars or (n, d) feature vectors
        k: Number of clusters (1 <= k <= n)
        seed: Seed of the k-means++ draws
        max_iter: Iteration cap

    Returns:
        KMeansResult; iteration stops once assignments no longer change.
        Empty clusters are re-seeded at the point farthest from its centroid.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ConfigError(f"k must be in [1, {n}], got {k}")
    if not np.all(np.isfinite(X)):
        raise ConfigError("k-means features must be finite")
    if max_iter < 1:
        raise ConfigError(f"max_iter: must be >= 1, got {max_iter}")

    rng = np.random.default_rng(seed)
    centroids = kmeans_plus_plus(X, k, rng)
    labels = np.full(n, -1)
    history: List[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = _sq_distances(X, centroids)
        new_labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(n), new_labels].sum())
        if history and inertia > history[-1] + 1e-12 * max(history[-1], 1.0):
            raise NumericalError(f"k-means inertia increased at iteration {iterations} ({history[-1]} -> {inertia})")
        history.append(inertia)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = labels == c
            if members.any():
                centroids[c] = X[members].mean(axis=0)
            else:
                own = d2[np.arange(n), labels]
                centroids[c] = X[int(np.argmax(own))]
    return KMeansResult(labels, centroids, history[-1], iterations, history)
