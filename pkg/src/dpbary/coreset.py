"""Pure-DP coresets for the Wasserstein distance.

A dyadic partition tree over [-1/2, 1/2]^d is built with noisy per-cell
counts (discrete Laplace, budget split across levels), the counts are
reconciled top-down into a consistent nonnegative tree, and points are then
synthesized per leaf cell independently of the raw data, so everything after
the counts is post-processing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from .geometry import RegionPolygon, point_in_polygon, project_into_polygon
from .kernels import dyadic_leaf_index
from .measures import BOUNDED_RADIUS, Dataset, DiscreteMeasure
from .mechanisms import BudgetLedger, NoiseSpec, exponential_mechanism, sample_discrete_laplace
from .ot import transport_cost, wasserstein_p

_MAX_DENSE_LEVELS = 24
_REJECTION_CAP = 1000
_REJECTION_BATCH = 64


@dataclass
class CoresetConfig:
    epsilon: Union[float, Fraction]
    levels_override: Optional[int] = None
    sampler: str = "cell_uniform"
    scale_factor: float = 1.0
    region: Optional[RegionPolygon] = None
    subsample_to: Optional[int] = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    noise_off: bool = False
    level_allocation: str = "uniform"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.sampler not in ("cell_uniform", "cell_uniform_scaled"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if not 0.0 < self.scale_factor <= 1.0:
            raise ValueError("scale factor must lie in (0, 1]")
        if self.noise.mechanism != "discrete_laplace":
            raise ValueError("hierarchical counts use the discrete Laplace mechanism")

    @property
    def epsilon_exact(self) -> Fraction:
        return Fraction(self.epsilon)


@dataclass
class HierarchicalCounts:
    """Dyadic counts over [-1/2, 1/2]^d for levels 0..L.

    Level l holds 2^l cells indexed by their split-bit path; split axes
    cycle with depth.  reconciled counts are nonnegative and consistent:
    the leaf total equals the root.
    """

    dimension: int
    levels: int
    true_counts: list
    noisy_counts: list
    reconciled_counts: list
    level_budgets: list  # Fractions; empty when noise was disabled

    def validate(self, tol: float = 1e-6):
        root = self.reconciled_counts[0][0]
        leaves = self.reconciled_counts[-1]
        if abs(leaves.sum() - root) > tol:
            raise ValueError("reconciled leaf counts do not sum to the root")
        for level in self.reconciled_counts:
            if np.any(level < 0):
                raise ValueError("reconciled counts must be nonnegative")

    def to_records(self) -> list:
        """Flat (level, cell, reconciled count) records for JSON export."""
        out = []
        for level, counts in enumerate(self.reconciled_counts):
            for cell in np.nonzero(counts)[0]:
                out.append(
                    {"level": level, "cell": int(cell), "reconciled_count": float(counts[cell])}
                )
        return out


def level_budgets(epsilon: Union[float, Fraction], levels: int, scheme: str = "uniform") -> list:
    """Exact per-level budget split over levels 0..L summing to epsilon.

    "uniform" gives every level the same share; "geometric" grows the share
    by 6/5 per level (close to the transport-optimal 2^(1/4) growth, kept
    rational so the accounting stays exact) so finer cells see less noise
    without starving the root.
    """
    eps = Fraction(epsilon)
    count = levels + 1
    if scheme == "uniform":
        return [eps / count for _ in range(count)]
    if scheme == "geometric":
        weights = [Fraction(6, 5) ** level for level in range(count)]
        total = sum(weights)
        return [eps * w / total for w in weights]
    raise ValueError(f"unknown allocation scheme {scheme!r}")


def default_levels(epsilon: float, n: int) -> int:
    return max(1, math.ceil(math.log2(epsilon * n)))


def _check_bounded(measure: DiscreteMeasure):
    r = np.sqrt(np.max(np.einsum("ij,ij->i", measure.points, measure.points)))
    if r > BOUNDED_RADIUS + 1e-9:
        raise ValueError(f"support must lie in the ball of radius {BOUNDED_RADIUS}; found {r:.4g}")


def build_counts(
    measure: DiscreteMeasure,
    config: CoresetConfig,
    ledger: Optional[BudgetLedger] = None,
    rng: Optional[np.random.Generator] = None,
) -> HierarchicalCounts:
    """True, noised, and reconciled dyadic counts of the measure's atoms.

    The default depth is ceil(log2(eps*n)); each level gets its share of the
    budget per ``config.level_allocation`` and cells within a level are
    disjoint, so the total privacy charge is exactly epsilon.
    """
    _check_bounded(measure)
    n = measure.n_atoms
    eps = float(config.epsilon)
    if config.levels_override is not None:
        L = int(config.levels_override)
        if L < 1:
            raise ValueError("levels_override must be >= 1")
    else:
        if eps * n <= 1:
            raise ValueError("need epsilon * n > 1 to size the partition")
        L = default_levels(eps, n)
    if L > _MAX_DENSE_LEVELS:
        raise ValueError(
            f"{L} levels would allocate 2^{L} cells; pass levels_override to cap the depth"
        )
    d = measure.dim

    leaf_idx = dyadic_leaf_index(np.ascontiguousarray(measure.points), L)
    true = [None] * (L + 1)
    true[L] = np.bincount(leaf_idx, minlength=2**L).astype(np.float64)
    for level in range(L - 1, -1, -1):
        true[level] = true[level + 1].reshape(-1, 2).sum(axis=1)

    budgets: list = []
    if config.noise_off:
        noisy = [c.copy() for c in true]
    else:
        if rng is None:
            rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
        budgets = level_budgets(config.epsilon_exact, L, config.level_allocation)
        noisy = []
        for level, eps_level in enumerate(budgets):
            scale = config.noise.heuristic_multiplier / float(eps_level)
            noise = sample_discrete_laplace(scale, rng, size=true[level].shape[0])
            noisy.append(true[level] + noise)
            if ledger is not None:
                ledger.charge(f"counts level {level}", eps_level)

    reconciled = [np.maximum(noisy[0], 0.0)]
    for level in range(1, L + 1):
        clipped = np.maximum(noisy[level], 0.0)
        pairs = clipped.reshape(-1, 2)
        sums = pairs.sum(axis=1)
        parent = reconciled[level - 1]
        child = np.empty_like(clipped)
        with np.errstate(invalid="ignore", divide="ignore"):
            share = np.where(sums[:, None] > 0, pairs / sums[:, None], 0.5)
        child = (parent[:, None] * share).reshape(-1)
        reconciled.append(child)

    counts = HierarchicalCounts(
        dimension=d,
        levels=L,
        true_counts=true,
        noisy_counts=noisy,
        reconciled_counts=reconciled,
        level_budgets=budgets,
    )
    counts.validate()
    return counts


def leaf_cell_bounds(levels: int, dimension: int, indices: np.ndarray):
    """Axis-aligned (lo, hi) boxes of the leaf cells with the given indices."""
    k = indices.shape[0]
    lo = np.full((k, dimension), -0.5)
    hi = np.full((k, dimension), 0.5)
    for step in range(levels):
        ax = step % dimension
        bit = (indices >> (levels - 1 - step)) & 1
        mid = 0.5 * (lo[:, ax] + hi[:, ax])
        upper = bit == 1
        lo[upper, ax] = mid[upper]
        hi[~upper, ax] = mid[~upper]
    return lo, hi


def max_leaf_diameter(levels: int, dimension: int) -> float:
    """Diameter of the (largest) leaf cell after ``levels`` cycled splits."""
    sides = []
    for axis in range(dimension):
        splits = len(range(axis, levels, dimension))
        sides.append(2.0**-splits)
    return float(np.linalg.norm(sides))


def _largest_remainder_round(values: np.ndarray) -> np.ndarray:
    """Integer counts with the same (rounded) total as the fractional input."""
    total = int(round(values.sum()))
    floors = np.floor(values).astype(np.int64)
    deficit = total - int(floors.sum())
    if deficit > 0:
        remainders = values - floors
        order = np.argsort(-remainders, kind="stable")
        floors[order[:deficit]] += 1
    elif deficit < 0:
        order = np.argsort(values - floors, kind="stable")
        take = 0
        for i in order:
            if floors[i] > 0 and take < -deficit:
                floors[i] -= 1
                take += 1
    return floors


def _sample_in_region(lo, hi, region, rng) -> np.ndarray:
    """One point from the box intersected with the region, with a capped retry
    budget and a fallback to the cell center projected into the region."""
    tried = 0
    while tried < _REJECTION_CAP:
        batch = min(_REJECTION_BATCH, _REJECTION_CAP - tried)
        cand = rng.uniform(lo, hi, size=(batch, 2))
        tried += batch
        for pt in cand:
            if point_in_polygon(region, pt):
                return pt
    center = 0.5 * (lo + hi)
    return project_into_polygon(region, center)


def synthesize_measure(counts: HierarchicalCounts, config: CoresetConfig) -> DiscreteMeasure:
    """Data-independent point synthesis from reconciled leaf counts.

    Leaf counts are rounded with largest remainders so the total matches the
    root; each emitted point is uniform in its (optionally shrunk) cell box,
    or rejection-sampled inside cell-and-region when a mask is set.  Output
    weights are uniform.
    """
    if config.region is not None and counts.dimension != 2:
        raise ValueError("region masks require 2-D data")
    leaf = counts.reconciled_counts[-1]
    atom_counts = _largest_remainder_round(leaf)
    total = int(atom_counts.sum())
    if total <= 0:
        raise ValueError("all reconciled counts are zero; nothing to synthesize")

    occupied = np.nonzero(atom_counts)[0]
    lo, hi = leaf_cell_bounds(counts.levels, counts.dimension, occupied)
    if config.sampler == "cell_uniform_scaled":
        center = 0.5 * (lo + hi)
        lo = center + config.scale_factor * (lo - center)
        hi = center + config.scale_factor * (hi - center)

    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[1])
    points = np.empty((total, counts.dimension))
    pos = 0
    for cell, clo, chi in zip(occupied, lo, hi):
        k = int(atom_counts[cell])
        if config.region is None:
            points[pos : pos + k] = rng.uniform(clo, chi, size=(k, counts.dimension))
        else:
            for r in range(k):
                points[pos + r] = _sample_in_region(clo, chi, config.region, rng)
        pos += k
    return DiscreteMeasure.uniform(points)


def build_coreset(
    measure: DiscreteMeasure,
    config: CoresetConfig,
    ledger: Optional[BudgetLedger] = None,
) -> DiscreteMeasure:
    """Private coreset: noisy hierarchical counts, then point synthesis.

    epsilon-DP with respect to one-point changes in the measure; the emitted
    size is within rounding of the reconciled total, optionally uniformly
    subsampled down to ``config.subsample_to`` atoms.
    """
    counts = build_counts(measure, config, ledger=ledger)
    out = synthesize_measure(counts, config)
    if config.subsample_to is not None and out.n_atoms > config.subsample_to:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(3)[2])
        keep = rng.choice(out.n_atoms, size=config.subsample_to, replace=False)
        out = DiscreteMeasure.uniform(out.points[np.sort(keep)])
    return out


def whp_coreset(
    measure: DiscreteMeasure,
    epsilon: Union[float, Fraction],
    xi: float,
    trials: int,
    base_config: Optional[CoresetConfig] = None,
    ledger: Optional[BudgetLedger] = None,
    utility_reg: float = 1e-2,
    utility_iters: int = 300,
) -> DiscreteMeasure:
    """Boosted coreset: several half-budget trials, private selection of one.

    Half the budget is split evenly across the trials, the other half drives
    an exponential-mechanism selection with utility -W_1(candidate, data)
    and sensitivity 1/n (moving one of n points in the radius-1/2 ball moves
    W_1 by at most 1/n).
    """
    if not 0 < xi < 1:
        raise ValueError("xi must lie in (0, 1)")
    if trials < math.ceil(math.log2(1.0 / xi)):
        raise ValueError(f"need at least ceil(log2(1/xi)) = {math.ceil(math.log2(1.0/xi))} trials")
    eps = Fraction(epsilon)
    trial_eps = eps / (2 * trials)
    if base_config is None:
        base_config = CoresetConfig(epsilon=eps)
    seeds = np.random.SeedSequence(base_config.seed).spawn(trials + 1)
    candidates = []
    utilities = []
    for t in range(trials):
        cfg = replace(base_config, epsilon=trial_eps, seed=int(seeds[t].generate_state(1)[0]))
        candidate = build_coreset(measure, cfg)
        if ledger is not None:
            ledger.charge(f"coreset trial {t}", trial_eps)
        candidates.append(candidate)
        utilities.append(
            -wasserstein_p(candidate, measure, p=1, method="sinkhorn", reg=utility_reg, max_iters=utility_iters)
        )
    select_rng = np.random.default_rng(seeds[trials])
    pick = exponential_mechanism(
        utilities,
        sensitivity=1.0 / measure.n_atoms,
        epsilon=float(eps / 2),
        rng=select_rng,
    )
    if ledger is not None:
        ledger.charge("coreset selection", eps / 2)
    return candidates[pick]


def coreset_opt_transfer_check(
    dataset: Dataset,
    coresets: list,
    candidate: DiscreteMeasure,
    p: float = 2.0,
    method: str = "exact",
    **kwargs,
):
    """Objective transfer bound from originals to coresets.

    Returns (lhs, rhs) with lhs the candidate's objective on the coresets
    and rhs its objective on the originals plus p*2^(p-1) times the mean
    p-th-power distance between each measure and its coreset; raises if the
    bound fails beyond 1e-6.  Requires supports of diameter at most 1.
    """
    if len(coresets) != dataset.k:
        raise ValueError("need one coreset per measure")
    lhs = sum(
        b * transport_cost(c, candidate, p, method, **kwargs)
        for b, c in zip(dataset.beta, coresets)
    )
    base = sum(
        b * transport_cost(mu, candidate, p, method, **kwargs)
        for b, mu in zip(dataset.beta, dataset.measures)
    )
    gap = sum(
        b * transport_cost(mu, c, p, method, **kwargs)
        for b, mu, c in zip(dataset.beta, dataset.measures, coresets)
    )
    rhs = base + p * 2 ** (p - 1) * gap
    if lhs > rhs + 1e-6:
        raise AssertionError(f"transfer bound violated: {lhs} > {rhs}")
    return float(lhs), float(rhs)
