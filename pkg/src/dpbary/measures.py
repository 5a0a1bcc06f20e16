"""Discrete measures (weighted point sets) and datasets of them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WEIGHT_SUM_TOL = 1e-9
BOUNDED_RADIUS = 0.5
# slack for points clipped onto the sphere of radius 1/2
_BOUNDED_TOL = 1e-9


@dataclass
class DiscreteMeasure:
    """A probability measure supported on finitely many points of R^d.

    points has shape (n, d); weights has shape (n,), is nonnegative and sums
    to 1 within 1e-9.  With ``bounded=True`` every point must lie in the
    closed ball of radius 1/2 about the origin.
    """

    points: np.ndarray
    weights: np.ndarray
    bounded: bool = False

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if self.points.ndim != 2 or self.points.shape[1] < 1:
            raise ValueError("points must form an (n, d) array with d >= 1")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points must be finite")
        if self.weights.shape[0] != self.points.shape[0]:
            raise ValueError(
                f"got {self.points.shape[0]} points but {self.weights.shape[0]} weights"
            )
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        total = float(self.weights.sum())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total}, expected 1 within {WEIGHT_SUM_TOL}")
        if self.bounded:
            r = np.sqrt(np.max(np.einsum("ij,ij->i", self.points, self.points)))
            if r > BOUNDED_RADIUS + _BOUNDED_TOL:
                raise ValueError(
                    f"bounded measure has a point at radius {r:.6g} > {BOUNDED_RADIUS}"
                )

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def uniform(cls, points: np.ndarray, bounded: bool = False) -> "DiscreteMeasure":
        """Uniform measure on the given points."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n), bounded=bounded)

    @classmethod
    def dirac(cls, point, bounded: bool = False) -> "DiscreteMeasure":
        return cls(np.atleast_2d(np.asarray(point, dtype=np.float64)), np.ones(1), bounded=bounded)

    def deduplicated(self) -> "DiscreteMeasure":
        """Merge atoms with exactly equal coordinates, summing their weights."""
        seen: dict[bytes, int] = {}
        pts: list[np.ndarray] = []
        wts: list[float] = []
        for x, w in zip(self.points, self.weights):
            key = x.tobytes()
            if key in seen:
                wts[seen[key]] += w
            else:
                seen[key] = len(pts)
                pts.append(x)
                wts.append(float(w))
        return DiscreteMeasure(np.array(pts), np.array(wts), bounded=self.bounded)

    def support_diameter(self) -> float:
        from .kernels import cost_matrix_np

        if self.n_atoms == 1:
            return 0.0
        return float(np.sqrt(np.max(cost_matrix_np(self.points, self.points, 2.0))))


def mixture(measures: list[DiscreteMeasure], coefficients) -> DiscreteMeasure:
    """Convex combination of measures, realized by concatenating atoms."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if len(measures) != coefficients.shape[0]:
        raise ValueError("one coefficient per measure required")
    if np.any(coefficients < 0) or abs(coefficients.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise ValueError("coefficients must be a probability vector")
    pts = np.concatenate([mu.points for mu in measures], axis=0)
    wts = np.concatenate([c * mu.weights for c, mu in zip(coefficients, measures)])
    return DiscreteMeasure(pts, wts)


@dataclass
class Dataset:
    """k discrete measures with positive group weights beta summing to 1.

    By default all measures must share the dimension and the atom count; the
    private pipelines relax the equal-atom-count requirement because coreset
    sizes fluctuate with the count noise.
    """

    measures: list[DiscreteMeasure]
    beta: np.ndarray = field(default=None)  # type: ignore[assignment]
    require_equal_atoms: bool = True

    def __post_init__(self):
        if len(self.measures) < 1:
            raise ValueError("need at least one measure")
        d = self.measures[0].dim
        if any(mu.dim != d for mu in self.measures):
            raise ValueError("all measures must share the dimension")
        if self.require_equal_atoms:
            n = self.measures[0].n_atoms
            if any(mu.n_atoms != n for mu in self.measures):
                raise ValueError("all measures must share the atom count")
        k = len(self.measures)
        if self.beta is None:
            self.beta = np.full(k, 1.0 / k)
        else:
            self.beta = np.asarray(self.beta, dtype=np.float64).ravel()
            if self.beta.shape[0] != k:
                raise ValueError("need one group weight per measure")
            if np.any(self.beta <= 0):
                raise ValueError("group weights must be positive")
            if abs(self.beta.sum() - 1.0) > WEIGHT_SUM_TOL:
                raise ValueError("group weights must sum to 1")

    @property
    def k(self) -> int:
        return len(self.measures)

    @property
    def dim(self) -> int:
        return self.measures[0].dim

    @property
    def n_atoms(self) -> int:
        """Common atom count (the minimum when sizes are allowed to differ)."""
        return min(mu.n_atoms for mu in self.measures)

    def pooled_points(self) -> np.ndarray:
        return np.concatenate([mu.points for mu in self.measures], axis=0)
