"""Shared test utilities: independent oracles and instance generators."""

from itertools import permutations

import numpy as np

from dpbary.kernels import cost_matrix_np
from dpbary.measures import DiscreteMeasure


def brute_force_uniform_cost(src: DiscreteMeasure, dst: DiscreteMeasure, p: float) -> float:
    """Minimum transport cost over all permutation matchings.

    Valid oracle for equal-size uniform measures, where Birkhoff extremality
    makes some permutation optimal.
    """
    assert src.n_atoms == dst.n_atoms
    n = src.n_atoms
    assert np.allclose(src.weights, 1.0 / n) and np.allclose(dst.weights, 1.0 / n)
    C = cost_matrix_np(src.points, dst.points, p)
    best = np.inf
    for perm in permutations(range(n)):
        cost = sum(C[i, perm[i]] for i in range(n)) / n
        if cost < best:
            best = cost
    return float(best)


def random_uniform_measure(rng, n, d, radius=0.5, bounded=False) -> DiscreteMeasure:
    """Uniform measure on n points drawn inside the ball of the given radius."""
    pts = rng.normal(size=(n, d))
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    radii = radius * rng.uniform(0, 1, size=(n, 1)) ** (1.0 / d)
    pts = pts / norms * radii
    return DiscreteMeasure.uniform(pts, bounded=bounded)


def random_weighted_measure(rng, n, d, radius=0.5) -> DiscreteMeasure:
    pts = rng.uniform(-radius / np.sqrt(d), radius / np.sqrt(d), size=(n, d))
    w = rng.uniform(0.1, 1.0, size=n)
    return DiscreteMeasure(pts, w / w.sum())
