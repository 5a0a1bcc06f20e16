"""Planar region polygons and the even-odd point-membership test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RegionPolygon:
    """A 2-D region given by closed vertex loops (outer boundary plus holes).

    Each ring must repeat its first vertex at the end and contain at least
    three distinct vertices.  Membership uses the even-odd rule over all
    rings, so a point inside an odd number of rings counts as inside.
    """

    rings: list

    def __post_init__(self):
        cleaned = []
        for ring in self.rings:
            arr = np.asarray(ring, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise ValueError("each ring must be a list of [x, y] pairs")
            if arr.shape[0] < 4 or not np.array_equal(arr[0], arr[-1]):
                raise ValueError("each ring needs >= 3 vertices with first == last")
            if np.unique(arr[:-1], axis=0).shape[0] < 3:
                raise ValueError("degenerate ring")
            cleaned.append(arr)
        if not cleaned:
            raise ValueError("need at least one ring")
        self.rings = cleaned

    def bounding_box(self):
        pts = np.concatenate(self.rings, axis=0)
        return pts.min(axis=0), pts.max(axis=0)


def _on_segment(a, b, pt, tol=1e-12) -> bool:
    cross = (b[0] - a[0]) * (pt[1] - a[1]) - (b[1] - a[1]) * (pt[0] - a[0])
    if abs(cross) > tol * max(1.0, abs(b[0] - a[0]) + abs(b[1] - a[1])):
        return False
    return (
        min(a[0], b[0]) - tol <= pt[0] <= max(a[0], b[0]) + tol
        and min(a[1], b[1]) - tol <= pt[1] <= max(a[1], b[1]) + tol
    )


def point_in_polygon(region: RegionPolygon, point) -> bool:
    """Even-odd ray-casting membership; boundary points count as inside."""
    x, y = float(point[0]), float(point[1])
    crossings = 0
    for ring in region.rings:
        for a, b in zip(ring[:-1], ring[1:]):
            if _on_segment(a, b, (x, y)):
                return True
            if (a[1] <= y) != (b[1] <= y):
                # x-coordinate where the edge meets the horizontal ray
                t = (y - a[1]) / (b[1] - a[1])
                if x < a[0] + t * (b[0] - a[0]):
                    crossings += 1
    return crossings % 2 == 1


def points_in_polygon(region: RegionPolygon, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return np.array([point_in_polygon(region, pt) for pt in points], dtype=bool)


def project_into_polygon(region: RegionPolygon, point) -> np.ndarray:
    """Nearest point of the region boundary (used as a sampling fallback)."""
    p = np.asarray(point, dtype=np.float64)
    if point_in_polygon(region, p):
        return p
    best = None
    best_d = np.inf
    for ring in region.rings:
        for a, b in zip(ring[:-1], ring[1:]):
            ab = b - a
            denom = float(ab @ ab)
            t = 0.0 if denom == 0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
            cand = a + t * ab
            d = float(np.sum((cand - p) ** 2))
            if d < best_d:
                best_d = d
                best = cand
    return best
