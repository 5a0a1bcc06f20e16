"""Gaussian random projections and the target-dimension rule.

Entries are i.i.d. N(0, 1/d') so that E||Px||^2 = ||x||^2; projections are
pure data and safe to share across threads read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .measures import DiscreteMeasure

# Dimension-rule constant, calibrated empirically so that solution costs are
# preserved within the target factor on random instances (see the projection
# benchmark in tests/test_acceptance.py); user-overridable everywhere.
DEFAULT_DIMENSION_CONSTANT = 0.02


@dataclass(frozen=True)
class Projection:
    """Linear map R^d -> R^d' given by a (d', d) matrix."""

    matrix: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=np.float64))
        if self.matrix.ndim != 2:
            raise ValueError("projection matrix must be 2-D")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("projection matrix must be finite")

    @property
    def d_in(self) -> int:
        return self.matrix.shape[1]

    @property
    def d_out(self) -> int:
        return self.matrix.shape[0]

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.shape[-1] != self.d_in:
            raise ValueError(f"points have dimension {points.shape[-1]}, expected {self.d_in}")
        return points @ self.matrix.T

    @classmethod
    def identity(cls, d: int) -> "Projection":
        return cls(np.eye(d))


def jl_dimension(
    p: float,
    gamma: float,
    xi: float,
    n: int,
    constant: float = DEFAULT_DIMENSION_CONSTANT,
    d: Optional[int] = None,
) -> int:
    """Projected dimension ceil(C * p^4 / gamma^2 * ln(n / (gamma * xi))).

    Clamped below by 1 and, when the ambient dimension ``d`` is given, above
    by d.
    """
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if not 0 < xi < 1:
        raise ValueError("xi must lie in (0, 1)")
    if n < 2:
        raise ValueError("n must be >= 2")
    raw = constant * p**4 / gamma**2 * math.log(n / (gamma * xi))
    d_prime = max(1, math.ceil(raw))
    if d is not None:
        d_prime = min(d_prime, d)
    return d_prime


def sample_projection(d: int, d_prime: int, seed: int) -> Projection:
    """i.i.d. Gaussian projection with entry variance 1/d'; seeded."""
    if not 1 <= d_prime <= d:
        raise ValueError("need 1 <= d_prime <= d")
    rng = np.random.default_rng(seed)
    matrix = rng.normal(0.0, 1.0 / math.sqrt(d_prime), size=(d_prime, d))
    return Projection(matrix, seed=seed)


def project_measure(projection: Projection, measure: DiscreteMeasure) -> DiscreteMeasure:
    """Pushforward: project every atom, keep weights and atom order."""
    return DiscreteMeasure(projection.apply(measure.points), measure.weights.copy())
