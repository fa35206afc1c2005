"""Deterministic k-means clustering used to seed the segmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["KmeansResult", "kmeans"]


@dataclass
class KmeansResult:
    """Clustering output: per-point labels, cluster centers, total inertia."""

    labels: np.ndarray
    centers: np.ndarray
    inertia: float


def _pick(candidates: np.ndarray, rng: np.random.Generator) -> int:
    # rng only participates when several points tie exactly
    if candidates.size == 1:
        return int(candidates[0])
    return int(candidates[rng.integers(candidates.size)])


def _seed_centers(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Farthest-point seeding: start nearest the global mean, then repeatedly
    take the point farthest from all chosen centers."""
    centers = np.empty((k, pts.shape[1]), dtype=float)
    d0 = np.sum((pts - pts.mean(axis=0)) ** 2, axis=1)
    centers[0] = pts[_pick(np.flatnonzero(d0 == d0.min()), rng)]
    mind = np.sum((pts - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        centers[c] = pts[_pick(np.flatnonzero(mind == mind.max()), rng)]
        mind = np.minimum(mind, np.sum((pts - centers[c]) ** 2, axis=1))
    return centers


def kmeans(observations, n_clusters: int, seed: int = 0, max_iters: int = 100) -> KmeansResult:
    """Lloyd's algorithm with deterministic seeding.

    `observations` is (N,) for scalar data or (N, d) for vectors.  Iterates
    until the assignments stop changing or `max_iters` is reached.  Runs are
    fully determined by the data; `seed` only breaks exact ties during
    seeding.  Output labels are canonicalized by ascending center norm.

    Raises ValueError when fewer than `n_clusters` distinct observations
    exist (clusters could not all be populated).
    """
    data = np.asarray(observations, dtype=float)
    if data.ndim == 1:
        pts = data.reshape(-1, 1)
    elif data.ndim == 2:
        pts = data
    else:
        raise ValueError(f"observations must be (N,) or (N, d), got shape {data.shape}")
    n = pts.shape[0]
    k = int(n_clusters)
    if k < 1:
        raise ValueError(f"n_clusters must be >= 1, got {n_clusters}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    if np.unique(pts, axis=0).shape[0] < k:
        raise ValueError(f"need at least {k} distinct observations for {k} clusters")

    rng = np.random.default_rng(seed)
    centers = _seed_centers(pts, k, rng)
    labels = None
    for _ in range(max_iters):
        d2 = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)

        counts = np.bincount(new_labels, minlength=k)
        if np.any(counts == 0):
            # repair: hand each empty cluster the point currently farthest
            # from its own center
            assigned = d2[np.arange(n), new_labels]
            order = np.argsort(assigned, kind="stable")[::-1]
            used = 0
            for c in np.flatnonzero(counts == 0):
                pick = int(order[used])
                used += 1
                new_labels[pick] = c
                centers[c] = pts[pick]

        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            member = labels == c
            if np.any(member):
                centers[c] = pts[member].mean(axis=0)

    # final centers are exactly the member means of the final assignment
    for c in range(k):
        member = labels == c
        if np.any(member):
            centers[c] = pts[member].mean(axis=0)

    order = np.argsort(np.linalg.norm(centers, axis=1), kind="stable")
    relabel = np.empty(k, dtype=np.int64)
    relabel[order] = np.arange(k)
    labels = relabel[labels]
    centers = centers[order]

    d2 = np.sum((pts - centers[labels]) ** 2, axis=1)
    inertia = float(d2.sum())
    if data.ndim == 1:
        centers = centers.reshape(k)
    return KmeansResult(labels=labels.astype(np.int64), centers=centers, inertia=inertia)
