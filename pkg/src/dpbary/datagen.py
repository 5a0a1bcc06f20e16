"""Synthetic data generators for experiments and instability witnesses."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .measures import BOUNDED_RADIUS, DiscreteMeasure


def _clip_to_ball(points: np.ndarray, radius: float = BOUNDED_RADIUS) -> np.ndarray:
    norms = np.linalg.norm(points, axis=1, keepdims=True)
    scale = np.minimum(1.0, radius / np.maximum(norms, 1e-300))
    return points * scale


def default_mixture_centers(d: int) -> np.ndarray:
    """Four centers at (+-1/4, +-1/4, 0, ..., 0) in R^d."""
    if d < 2:
        raise ValueError("the four-center layout needs d >= 2")
    centers = np.zeros((4, d))
    centers[:, :2] = np.array([[0.25, 0.25], [0.25, -0.25], [-0.25, 0.25], [-0.25, -0.25]])
    return centers


def gen_gaussian_mixture(
    n: int,
    d: int,
    centers: Optional[np.ndarray] = None,
    stddev: float = 0.05,
    seed: int = 0,
) -> DiscreteMeasure:
    """n i.i.d. draws from an equally weighted Gaussian mixture, clipped to
    the radius-1/2 ball."""
    rng = np.random.default_rng(seed)
    centers = default_mixture_centers(d) if centers is None else np.atleast_2d(centers)
    if centers.shape[1] != d:
        raise ValueError("centers must have dimension d")
    comp = rng.integers(centers.shape[0], size=n)
    pts = centers[comp] + stddev * rng.standard_normal((n, d))
    return DiscreteMeasure.uniform(_clip_to_ball(pts), bounded=True)


def gen_clustered_atoms(
    n_clusters: int = 4,
    atoms_per_cluster: int = 10,
    spread: float = 0.02,
    d: int = 2,
    seed: int = 0,
) -> DiscreteMeasure:
    """A discrete source supported on tight clusters (used as a clusterable
    ground-truth distribution one can sample from exactly)."""
    rng = np.random.default_rng(seed)
    centers = default_mixture_centers(d)[:n_clusters]
    pts = np.concatenate(
        [c + spread * rng.standard_normal((atoms_per_cluster, d)) for c in centers]
    )
    return DiscreteMeasure.uniform(_clip_to_ball(pts), bounded=True)


def sample_from_measure(measure: DiscreteMeasure, n: int, seed: int) -> DiscreteMeasure:
    """Empirical measure of n i.i.d. draws from a discrete measure."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(measure.n_atoms, size=n, p=measure.weights)
    return DiscreteMeasure.uniform(measure.points[idx])


def gen_counterexample_1d(n: int, e: float = 0.5):
    """The 1-D assignment-instability pair.

    The base measure is uniform on {k/n : k in [n]}, affinely rescaled onto
    [-1/2, 1/2]; the perturbation moves the smallest atom past its neighbor
    to (2+e)/n (same rescaling), a move of total transport size (1+e)/n^2
    before rescaling.
    """
    if n < 3:
        raise ValueError("n must be >= 3")
    if not 0 < e < 1:
        raise ValueError("e must lie in (0, 1) to land between the 2nd and 3rd atoms")
    base = np.arange(1, n + 1) / n
    perturbed = base.copy()
    perturbed[0] = (2.0 + e) / n

    lo, hi = 1.0 / n, 1.0
    rescale = lambda t: (t - lo) / (hi - lo) - 0.5  # noqa: E731
    return (
        DiscreteMeasure.uniform(rescale(base)[:, None], bounded=True),
        DiscreteMeasure.uniform(rescale(perturbed)[:, None], bounded=True),
    )


def gen_circle_instability(n: int = 16, radius: float = 0.45, ridge_offset: float = 1e-4):
    """Circle data with a symmetry-breaking 1-point perturbation.

    The base measure is n points uniform on a circle (angles offset so no
    point lies on an axis), for which every half-arc split ties.  The listed
    initialization places both barycenter atoms near the unstable center on
    the x-axis, which resolves the tie towards the left/right split.  The
    perturbation moves the point nearest the +x axis to the top of the
    circle, tilting the dominant separation direction to the y-axis, so the
    same initialization flows to an orthogonal split and every output atom
    moves a constant distance.

    Returns (measure, perturbed_measure, init_points).
    """
    if n < 8 or n % 4 != 0:
        raise ValueError("use a multiple of 4 with n >= 8 for the symmetric layout")
    angles = 2 * np.pi * (np.arange(n) + 0.5) / n
    pts = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    perturbed = pts.copy()
    perturbed[0] = [0.0, radius]
    init = np.array([[ridge_offset, 0.0], [-ridge_offset, 0.0]])
    return (
        DiscreteMeasure.uniform(pts, bounded=True),
        DiscreteMeasure.uniform(perturbed, bounded=True),
        init,
    )


def image_to_measure(grid: np.ndarray) -> DiscreteMeasure:
    """Grayscale grid as a measure: one atom per nonzero pixel, mapped into
    [-1/4, 1/4]^2, with weight proportional to intensity."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError("grid must be 2-D")
    if np.any(grid < 0):
        raise ValueError("grid must be nonnegative")
    total = grid.sum()
    if total <= 0:
        raise ValueError("grid has no mass")
    h, w = grid.shape
    rows, cols = np.nonzero(grid)
    x = (cols + 0.5) / w * 0.5 - 0.25
    y = 0.25 - (rows + 0.5) / h * 0.5
    weights = grid[rows, cols] / total
    return DiscreteMeasure(np.stack([x, y], axis=1), weights, bounded=True)
