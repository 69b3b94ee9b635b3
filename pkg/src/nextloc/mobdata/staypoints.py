"""Stay-point extraction and density-based clustering into locations.

Distances are plain Euclidean in whatever units the coordinates use; pick
thresholds accordingly (meters for projected tracks, degrees for raw
lat/lon at small extents).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nextloc.geoenc import GeoPoint
from nextloc.mobdata.model import Location, LocationIndex


@dataclass(frozen=True)
class Staypoint:
    centroid: GeoPoint
    arrival: float
    departure: float


def detect_staypoints(
    track: list[tuple[float, GeoPoint]], dist_threshold: float, time_threshold: float
) -> list[Staypoint]:
    """Find maximal dwells: runs of points within dist_threshold of their
    anchor (the run's first point) lasting at least time_threshold.
    """
    if dist_threshold <= 0 or time_threshold <= 0:
        raise ValueError("thresholds must be positive")
    if not track:
        return []
    times = [t for t, _ in track]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("track must be time-sorted")
    points = np.array([[p.x, p.y] for _, p in track])
    ts = np.array(times, dtype=np.float64)
    n = len(track)
    out: list[Staypoint] = []
    i = 0
    while i < n:
        j = i + 1
        while j < n and math.hypot(*(points[j] - points[i])) <= dist_threshold:
            j += 1
        # points[i:j] all lie within the radius around the anchor
        if ts[j - 1] - ts[i] >= time_threshold:
            cx, cy = points[i:j].mean(axis=0)
            out.append(Staypoint(GeoPoint(float(cx), float(cy)), float(ts[i]), float(ts[j - 1])))
            i = j
        else:
            i += 1
    return out


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull in counterclockwise order; degenerate inputs
    (fewer than 3 distinct points, or collinear) return the distinct points.
    """
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts
    ordered = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def half(iterable):
        chain: list[np.ndarray] = []
        for p in iterable:
            while len(chain) >= 2 and cross(chain[-2], chain[-1], p) <= 0:
                chain.pop()
            chain.append(p)
        return chain[:-1]

    lower = half(ordered)
    upper = half(ordered[::-1])
    hull = lower + upper
    if len(hull) < 3:  # all points collinear
        return ordered[[0, -1]]
    return np.array(hull)


class _DBSCAN:
    """Textbook density clustering over 2-d points, Euclidean metric."""

    NOISE = -1
    UNSEEN = -2

    def __init__(self, eps: float, min_samples: int):
        if eps <= 0 or min_samples < 1:
            raise ValueError("eps must be positive and min_samples >= 1")
        self.eps = eps
        self.min_samples = min_samples

    def fit(self, points: np.ndarray) -> np.ndarray:
        n = len(points)
        labels = np.full(n, self.UNSEEN, dtype=np.int64)
        cluster = 0
        for i in range(n):
            if labels[i] != self.UNSEEN:
                continue
            neighbors = self._region(points, i)
            if len(neighbors) < self.min_samples:
                labels[i] = self.NOISE
                continue
            labels[i] = cluster
            queue = [k for k in neighbors if k != i]
            while queue:
                k = queue.pop(0)
                if labels[k] == self.NOISE:
                    labels[k] = cluster
                if labels[k] != self.UNSEEN:
                    continue
                labels[k] = cluster
                expansion = self._region(points, k)
                if len(expansion) >= self.min_samples:
                    queue.extend(m for m in expansion if labels[m] == self.UNSEEN or labels[m] == self.NOISE)
            cluster += 1
        return labels

    def _region(self, points: np.ndarray, i: int) -> list[int]:
        d = np.linalg.norm(points - points[i], axis=1)
        return list(np.flatnonzero(d <= self.eps))


def cluster_staypoints(staypoints: list[Staypoint], eps: float, min_samples: int = 1) -> LocationIndex:
    """Group pooled stay-point centroids into locations.

    Each density cluster becomes one Location at the member centroid mean,
    with the members' convex hull as geometry; noise points become singleton
    locations. Ids number clusters in discovery order, then noise points.
    """
    if not staypoints:
        return LocationIndex([])
    points = np.array([[s.centroid.x, s.centroid.y] for s in staypoints])
    labels = _DBSCAN(eps, min_samples).fit(points)
    locations: list[Location] = []
    counter = 0
    for label in range(labels.max() + 1 if labels.size else 0):
        members = points[labels == label]
        hull = convex_hull(members)
        cx, cy = members.mean(axis=0)
        locations.append(
            Location(
                id=f"L{counter:05d}",
                semantics="",
                centroid=GeoPoint(float(cx), float(cy)),
                hull=tuple(GeoPoint(float(x), float(y)) for x, y in hull),
            )
        )
        counter += 1
    for i in np.flatnonzero(labels == _DBSCAN.NOISE):
        x, y = points[i]
        locations.append(
            Location(id=f"L{counter:05d}", semantics="", centroid=GeoPoint(float(x), float(y)))
        )
        counter += 1
    return LocationIndex(locations)
