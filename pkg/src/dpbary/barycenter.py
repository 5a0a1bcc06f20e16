"""Free-support barycenter solver and the solution-weight machinery.

A "solution" assigns each data point a split of its own unit mass across the
barycenter atoms; given those weights, atom locations are recovered as
weighted power-mean minimizers and the barycenter objective can be evaluated
with or without a linear projection of the data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .kernels import cost_matrix, sinkhorn_log
from .measures import Dataset, DiscreteMeasure
from .ot import exact_ot, sinkhorn_ot

CONVERGENCE_RTOL = 1e-7
_EMPTY_MASS = 1e-12


class EmptySupportSetError(ValueError):
    def __init__(self, atom: int):
        self.atom = atom
        super().__init__(f"support set of barycenter atom {atom} is empty")


@dataclass
class Solution:
    """Per-atom sparse maps from data-point ids (i, l) to mass fractions.

    assignments[j] maps (measure index, atom index) to w_j(x), the fraction
    of that data point's own mass sent to barycenter atom j; the fractions
    for any data point sum to 1.
    """

    assignments: list
    m: int
    source: Dataset

    def weight_sums(self) -> dict:
        sums: dict = {}
        for mapping in self.assignments:
            for key, w in mapping.items():
                sums[key] = sums.get(key, 0.0) + w
        return sums

    def validate(self, tol: float = 1e-6):
        for j, mapping in enumerate(self.assignments):
            for key, w in mapping.items():
                if w <= 0:
                    raise ValueError(f"atom {j} stores a non-positive weight for {key}")
        for key, s in self.weight_sums().items():
            if abs(s - 1.0) > tol:
                raise ValueError(f"weights of data point {key} sum to {s}, expected 1")

    def support_sets(self) -> list:
        return [set(mapping) for mapping in self.assignments]


@dataclass
class BarycenterResult:
    measure: DiscreteMeasure
    cost: float
    iterations_run: int
    converged: bool
    objective_trace: list = field(default_factory=list)
    reseed_events: list = field(default_factory=list)


def _as_dataset(data: Union[Dataset, Sequence[DiscreteMeasure]]) -> Dataset:
    if isinstance(data, Dataset):
        return data
    return Dataset(list(data), require_equal_atoms=False)


def weighted_power_minimizer(
    points: np.ndarray,
    weights: np.ndarray,
    p: float,
    tol: float = 1e-8,
    max_iters: int = 10_000,
) -> np.ndarray:
    """argmin_y sum_i w_i ||x_i - y||^p for p >= 1.

    Closed-form weighted mean for p = 2, Weiszfeld iteration for p = 1, and
    gradient descent with backtracking for other exponents.
    """
    points = np.asarray(points, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    if total <= 0:
        raise ValueError("weights must have positive total mass")
    mean = weights @ points / total
    if p == 2.0:
        return mean

    if p == 1.0:
        y = mean.copy()
        for _ in range(max_iters):
            dists = np.linalg.norm(points - y, axis=1)
            inv = weights / np.maximum(dists, 1e-15)
            y_new = inv @ points / inv.sum()
            if np.linalg.norm(y_new - y) <= tol:
                return y_new
            y = y_new
        return y

    # general p: descend the convex objective until the gradient is tiny
    y = mean.copy()
    scale = max(1.0, float(np.max(np.abs(points))))
    step = 1.0
    for _ in range(max_iters):
        diff = y - points
        dists = np.maximum(np.linalg.norm(diff, axis=1), 1e-15)
        grad = (weights * p * dists ** (p - 2.0)) @ diff
        gnorm = np.linalg.norm(grad)
        if gnorm <= tol * total * scale:
            break
        obj = float(weights @ dists**p)
        while step > 1e-18:
            cand = y - step * grad
            cd = np.maximum(np.linalg.norm(cand - points, axis=1), 1e-15)
            if float(weights @ cd**p) < obj - 0.5 * step * gnorm**2:
                break
            step *= 0.5
        y = y - step * grad
        step = min(step * 2.0, 1e6)
    return y


def _sinkhorn_plan_raw(
    points: np.ndarray,
    weights: np.ndarray,
    support: np.ndarray,
    support_weights: np.ndarray,
    p: float,
    reg: float,
    inner_iters: int,
    tol: float,
):
    """Fast-path entropic plan used inside the fixed-point loop."""
    C = cost_matrix(points, support, p)
    with np.errstate(divide="ignore"):
        loga = np.log(weights)
        logb = np.log(support_weights)
    alpha, beta, _, _ = sinkhorn_log(C, loga, logb, reg, inner_iters, tol)
    with np.errstate(over="ignore"):
        plan = np.exp(-C / reg + alpha[:, None] + beta[None, :])
    return plan, C


def free_support_barycenter(
    data: Union[Dataset, Sequence[DiscreteMeasure]],
    m: int,
    p: float = 2.0,
    reg: float = 1e-2,
    outer_iters: int = 50,
    inner_iters: int = 100,
    init: Union[str, np.ndarray] = "subsample",
    seed: int = 0,
    inner_tol: float = 1e-9,
) -> BarycenterResult:
    """Fixed-point barycenter with m uniform atoms and free support.

    Alternates entropic transport plans from each input measure to the
    current support with the weighted power-mean support update.  Atoms that
    receive no mass are reseeded from a random data point and the event is
    recorded.  Deterministic for a fixed seed.
    """
    data = _as_dataset(data)
    if not 1 <= m <= data.n_atoms:
        raise ValueError(f"m must lie in [1, {data.n_atoms}]")
    if outer_iters < 1:
        raise ValueError("outer_iters must be >= 1")
    rng = np.random.default_rng(seed)
    pooled = data.pooled_points()

    if isinstance(init, str):
        if init != "subsample":
            raise ValueError("init must be 'subsample' or an (m, d) array")
        support = pooled[rng.choice(pooled.shape[0], size=m, replace=False)].copy()
    else:
        support = np.array(init, dtype=np.float64)
        if support.shape != (m, data.dim):
            raise ValueError("provided init must have shape (m, d)")

    nu_weights = np.full(m, 1.0 / m)
    trace: list[float] = []
    reseeds: list[tuple[int, int]] = []
    converged = False
    iterations = 0

    for outer in range(outer_iters):
        iterations = outer + 1
        plans = []
        objective = 0.0
        for beta_i, mu in zip(data.beta, data.measures):
            plan, C = _sinkhorn_plan_raw(
                mu.points, mu.weights, support, nu_weights, p, reg, inner_iters, inner_tol
            )
            plans.append(plan)
            objective += beta_i * float(np.sum(plan * C))
        trace.append(objective)
        if len(trace) >= 2:
            prev = trace[-2]
            if abs(prev - objective) <= CONVERGENCE_RTOL * max(abs(prev), 1e-30):
                converged = True
                break

        # support update: each atom minimizes its mass-weighted p-cost
        new_support = support.copy()
        for j in range(m):
            pts_blocks = []
            wts_blocks = []
            for beta_i, mu, plan in zip(data.beta, data.measures, plans):
                col = plan[:, j]
                keep = col > 0
                if np.any(keep):
                    pts_blocks.append(mu.points[keep])
                    wts_blocks.append(beta_i * col[keep])
            mass = float(sum(w.sum() for w in wts_blocks)) if wts_blocks else 0.0
            if mass < _EMPTY_MASS:
                pick = int(rng.integers(pooled.shape[0]))
                new_support[j] = pooled[pick]
                reseeds.append((outer, j))
                continue
            new_support[j] = weighted_power_minimizer(
                np.concatenate(pts_blocks), np.concatenate(wts_blocks), p
            )
        support = new_support

    # final cost against the returned support
    cost = 0.0
    for beta_i, mu in zip(data.beta, data.measures):
        plan, C = _sinkhorn_plan_raw(
            mu.points, mu.weights, support, nu_weights, p, reg, inner_iters, inner_tol
        )
        cost += beta_i * float(np.sum(plan * C))

    return BarycenterResult(
        measure=DiscreteMeasure(support, nu_weights),
        cost=cost,
        iterations_run=iterations,
        converged=converged,
        objective_trace=trace,
        reseed_events=reseeds,
    )


def solution_weights(
    candidate: DiscreteMeasure,
    data: Union[Dataset, Sequence[DiscreteMeasure]],
    p: float = 2.0,
    method: str = "exact",
    **kwargs,
) -> Solution:
    """Derive the per-point mass splits from transport plans to the candidate.

    Row l of the plan from measure i is normalized by the point's own mass,
    so each data point's outgoing fractions sum to 1; support sets keep the
    strictly positive entries only.
    """
    data = _as_dataset(data)
    m = candidate.n_atoms
    assignments: list[dict] = [dict() for _ in range(m)]
    for i, mu in enumerate(data.measures):
        if method == "exact":
            plan = exact_ot(mu, candidate, p, **kwargs).matrix
        elif method == "sinkhorn":
            plan = sinkhorn_ot(mu, candidate, p, **kwargs).matrix
        else:
            raise ValueError(f"unknown method {method!r}")
        row_sums = plan.sum(axis=1)
        for ell in range(mu.n_atoms):
            if row_sums[ell] <= 0:
                continue
            frac = plan[ell] / row_sums[ell]
            for j in np.nonzero(frac > 0)[0]:
                assignments[int(j)][(i, ell)] = float(frac[j])
    return Solution(assignments=assignments, m=m, source=data)


def support_points(
    data: Union[Dataset, Sequence[DiscreteMeasure]],
    solution: Solution,
    p: float = 2.0,
) -> np.ndarray:
    """Recover the m barycenter atoms as weighted power-mean minimizers.

    The contribution of data point (i, l) to atom j is weighted by the
    point's mass, the group weight, and its assigned fraction w_j.
    """
    data = _as_dataset(data)
    out = np.empty((solution.m, data.dim))
    for j, mapping in enumerate(solution.assignments):
        if not mapping:
            raise EmptySupportSetError(j)
        pts = np.array([data.measures[i].points[ell] for (i, ell) in mapping])
        wts = np.array(
            [
                data.beta[i] * data.measures[i].weights[ell] * w
                for (i, ell), w in mapping.items()
            ]
        )
        out[j] = weighted_power_minimizer(pts, wts, p)
    return out


def cost_of_solution(
    data: Union[Dataset, Sequence[DiscreteMeasure]],
    solution: Solution,
    p: float = 2.0,
) -> float:
    """Objective value of a solution: optimal atoms, then the weighted sum.

    Equals (1/(nk)) sum_j sum_x w_j(x) ||x - nu_j||^p for uniform measures
    with uniform group weights, and generalizes through the point masses.
    """
    data = _as_dataset(data)
    atoms = support_points(data, solution, p)
    total = 0.0
    for j, mapping in enumerate(solution.assignments):
        for (i, ell), w in mapping.items():
            x = data.measures[i].points[ell]
            mass = data.beta[i] * data.measures[i].weights[ell]
            total += mass * w * float(np.linalg.norm(x - atoms[j]) ** p)
    return total


def cost_of_projected_solution(
    data: Union[Dataset, Sequence[DiscreteMeasure]],
    solution: Solution,
    projection,
    p: float = 2.0,
) -> float:
    """Objective of the solution after projecting the data, keeping weights.

    The atoms are re-optimized in the projected space under the frozen
    assignment fractions and the weighted sum is evaluated there.
    """
    data = _as_dataset(data)
    matrix = getattr(projection, "matrix", projection)
    matrix = np.asarray(matrix, dtype=np.float64)
    projected = Dataset(
        [
            DiscreteMeasure(mu.points @ matrix.T, mu.weights)
            for mu in data.measures
        ],
        beta=data.beta,
        require_equal_atoms=False,
    )
    proj_solution = Solution(assignments=solution.assignments, m=solution.m, source=projected)
    return cost_of_solution(projected, proj_solution, p)


def reconstruct_barycenter(
    data: Union[Dataset, Sequence[DiscreteMeasure]],
    solution: Solution,
    p: float = 2.0,
) -> DiscreteMeasure:
    """Uniform-weight barycenter measure on the recovered support points."""
    atoms = support_points(data, solution, p)
    return DiscreteMeasure.uniform(atoms)
