"""Partition views into disjoint groups of neighboring cameras."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCameraList


@dataclass(frozen=True)
class ViewGroup:
    view_indices: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.view_indices)

    def __iter__(self):
        return iter(self.view_indices)


def camera_centers(cameras) -> np.ndarray:
    return np.array([cam.center for cam in cameras]).reshape(-1, 3)


def group_centers(centers: np.ndarray, n: int) -> list[ViewGroup]:
    """Greedy farthest-seed grouping on raw camera centers.

    The first seed is view 0. Each later seed is the unassigned view whose
    distance to the nearest existing group centroid is largest. A seed takes
    its ``n - 1`` nearest unassigned views. Ties go to the lower index.
    """
    if n < 1:
        raise ValueError("group size must be >= 1")
    centers = np.asarray(centers, dtype=np.float64)
    count = len(centers)
    if count == 0:
        raise EmptyCameraList("no cameras to group")

    unassigned = np.ones(count, dtype=bool)
    centroids: list[np.ndarray] = []
    groups: list[ViewGroup] = []
    while unassigned.any():
        free = np.nonzero(unassigned)[0]
        if not centroids:
            seed = int(free[0])
        else:
            dist = np.linalg.norm(centers[free, None, :] - np.array(centroids)[None], axis=-1).min(axis=1)
            # argmax returns the first maximum, i.e. the lowest view index
            seed = int(free[np.argmax(dist)])
        d_seed = np.linalg.norm(centers[free] - centers[seed], axis=1)
        members = free[np.lexsort((free, d_seed))][:n]
        unassigned[members] = False
        centroids.append(centers[members].mean(axis=0))
        groups.append(ViewGroup(tuple(sorted(int(i) for i in members))))
    return groups


def group_views(cameras, n: int = 15) -> list[ViewGroup]:
    if len(cameras) == 0:
        raise EmptyCameraList("no cameras to group")
    return group_centers(camera_centers(cameras), n)


def singleton_groups(count: int) -> list[ViewGroup]:
    return [ViewGroup((i,)) for i in range(count)]


def mean_within_group_distance(centers: np.ndarray, groups) -> float:
    """Mean pairwise center distance over all within-group pairs."""
    centers = np.asarray(centers, dtype=np.float64)
    total, pairs = 0.0, 0
    for g in groups:
        idx = list(g)
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                total += float(np.linalg.norm(centers[idx[a]] - centers[idx[b]]))
                pairs += 1
    return total / pairs if pairs else 0.0
