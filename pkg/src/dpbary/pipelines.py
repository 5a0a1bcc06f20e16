"""End-to-end private barycenter pipelines.

Both private routes share one non-private core: optionally project the
inputs, run the free-support solver there, derive per-point assignment
weights, and recover the support in the original space.  The coreset route
feeds that core privatized measures (full budget each; the inputs are
disjoint); the output-perturbation routes add calibrated Gaussian noise to
the stacked support vector, optionally after splitting every distribution
into disjoint parts.

Every mechanism invocation lands in a ``BudgetLedger``; reports carry the
exact charged budget, a strict/heuristic flag, and full provenance.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from .barycenter import (
    BarycenterResult,
    free_support_barycenter,
    solution_weights,
    support_points,
)
from .coreset import CoresetConfig, build_coreset
from .measures import BOUNDED_RADIUS, Dataset, DiscreteMeasure
from .mechanisms import BudgetLedger, PrivacyBudget, gaussian_mechanism
from .projection import project_measure, sample_projection

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ApproxParams:
    """Parameters of the black-box approximate barycenter solver."""

    reg: float = 1e-2
    outer_iters: int = 50
    inner_iters: int = 100
    weights_method: str = "sinkhorn"
    init: str = "subsample"


@dataclass
class PipelineReport:
    """Result of one pipeline run with its exact privacy accounting.

    ``privacy_charged`` is None only in the noise-off test mode; otherwise
    it equals the ledger total exactly.  ``strictness`` is "heuristic" iff
    any noise call used a shrink multiplier below 1, voiding the formal
    guarantee.
    """

    barycenter: BarycenterResult
    privacy_charged: Optional[PrivacyBudget]
    strictness: str
    provenance: dict
    ledger: BudgetLedger = field(default_factory=BudgetLedger)
    intermediates: Optional[dict] = None

    def to_json(self, indent: Optional[int] = 2) -> str:
        payload = {
            "barycenter": {
                "points": self.barycenter.measure.points.tolist(),
                "weights": self.barycenter.measure.weights.tolist(),
                "cost": self.barycenter.cost,
                "iterations_run": self.barycenter.iterations_run,
                "converged": self.barycenter.converged,
            },
            "privacy_charged": (
                None
                if self.privacy_charged is None
                else {"epsilon": self.privacy_charged.epsilon, "delta": self.privacy_charged.delta}
            ),
            "strictness": self.strictness,
            "provenance": self.provenance,
            "ledger": self.ledger.to_records(),
        }
        return json.dumps(payload, indent=indent)


def output_noise_variance(m: int, k: int, k_prime: int, epsilon: float, delta: float) -> float:
    """Per-coordinate Gaussian variance 2m*ln(1.25/delta) / (eps*k*k')^2."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return 2.0 * m * math.log(1.25 / delta) / (epsilon * k * k_prime) ** 2


def optimal_k_prime(n: int, m: int, d: int, epsilon: float, k: int, p: float = 2.0) -> int:
    """Split count equalizing the noise and subsampling error terms.

    Evaluates n^(1/(2p+1)) * m^((p-1)/(2p+1)) * d^(p/(2p+1)) * (eps*k)^(-2p/(2p+1))
    with constant 1, rounded and clamped to [1, n].
    """
    if min(n, m, d, k) < 1 or epsilon <= 0 or p < 1:
        raise ValueError("all arguments must be positive")
    q = 2 * p + 1
    value = n ** (1 / q) * m ** ((p - 1) / q) * d ** (p / q) * (epsilon * k) ** (-2 * p / q)
    return int(min(n, max(1, round(value))))


def split_distribution(measure: DiscreteMeasure, k_prime: int, seed: int) -> list:
    """Shuffle the atoms and cut them into k' disjoint uniform sub-measures.

    Each part holds floor(n/k') atoms; the n mod (k'*floor(n/k')) leftover
    atoms are dropped, mirroring slice-based splitting, and the drop count
    is logged.
    """
    n = measure.n_atoms
    if not 1 <= k_prime <= n:
        raise ValueError(f"k_prime must lie in [1, {n}]")
    if not np.allclose(measure.weights, 1.0 / n, atol=1e-9):
        raise ValueError("splitting is defined for uniform-weight measures")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    size = n // k_prime
    dropped = n - k_prime * size
    if dropped:
        logger.info("split_distribution dropped %d leftover atoms", dropped)
    return [
        DiscreteMeasure.uniform(measure.points[order[j * size : (j + 1) * size]])
        for j in range(k_prime)
    ]


def clusterability_profile(measure: DiscreteMeasure, m: int, delta_radius: float) -> float:
    """Greedy upper bound on the uncovered mass outside m radius-Delta balls.

    Centers are picked greedily from the atoms, each round taking the atom
    whose ball covers the most still-uncovered mass; the exact minimal cover
    is NP-hard, so the returned c only upper-bounds it.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if delta_radius <= 0:
        raise ValueError("delta_radius must be positive")
    from .kernels import cost_matrix_np

    within = cost_matrix_np(measure.points, measure.points, 2.0) <= delta_radius**2
    uncovered = measure.weights.copy()
    for _ in range(min(m, measure.n_atoms)):
        gains = within @ uncovered
        best = int(np.argmax(gains))
        if gains[best] <= 0:
            break
        uncovered[within[best]] = 0.0
    return float(uncovered.sum())


def empirical_convergence_bound(n: int, m: int, p: float, c: float, xi: float) -> float:
    """High-probability bound on W_p^p between a clusterable source and its
    n-sample empirical measure (valid for c <= 1/2 and n <= m*(2*Delta)^(-2p))."""
    if not 0 < xi < 1:
        raise ValueError("xi must lie in (0, 1)")
    if not 0 <= c <= 0.5:
        raise ValueError("c must lie in [0, 1/2]")
    r = math.sqrt(math.log(4.0 / xi) / (2.0 * n))
    eff = (1.0 - c - r) * n
    if eff <= 0:
        return float("inf")
    return (
        (1.0 - c) * ((9.0**p + 3.0) * math.sqrt(m / eff) + math.sqrt(math.log(4.0 / xi) / (2.0 * eff)))
        + c
        + r
    )


# ---------------------------------------------------------------------------
# shared non-private core
# ---------------------------------------------------------------------------


def _pipeline_seeds(seed: int):
    ss = np.random.SeedSequence(seed)
    proj, private, solver, noise = ss.spawn(4)
    return proj, private, solver, noise


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


def _approx_with_recovery(
    inputs: Dataset,
    m: int,
    p: float,
    d_prime: Optional[int],
    approx: ApproxParams,
    proj_seed,
    solver_seed,
    provenance: dict,
):
    """Project, solve, derive weights, and recover the support.

    Returns (support atoms in the original space, solver result).  The
    projection is skipped (and recorded) when d' is absent or >= d.
    """
    d = inputs.dim
    if d_prime is not None and d_prime > d:
        raise ValueError(f"d_prime={d_prime} exceeds the data dimension {d}")
    if d_prime is not None and d_prime < d:
        projection = sample_projection(d, d_prime, seed=_seed_int(proj_seed))
        solve_inputs = Dataset(
            [project_measure(projection, mu) for mu in inputs.measures],
            beta=inputs.beta,
            require_equal_atoms=False,
        )
        provenance["d_prime"] = d_prime
        provenance["projection_skipped"] = False
    else:
        solve_inputs = inputs
        provenance["d_prime"] = None
        provenance["projection_skipped"] = True

    result = free_support_barycenter(
        solve_inputs,
        m,
        p=p,
        reg=approx.reg,
        outer_iters=approx.outer_iters,
        inner_iters=approx.inner_iters,
        init=approx.init,
        seed=_seed_int(solver_seed),
    )
    weights_kwargs = (
        {"reg": approx.reg, "max_iters": approx.inner_iters} if approx.weights_method == "sinkhorn" else {}
    )
    solution = solution_weights(
        result.measure, solve_inputs, p=p, method=approx.weights_method, **weights_kwargs
    )
    atoms = support_points(inputs, solution, p=p)
    provenance["solver_iterations"] = result.iterations_run
    provenance["solver_converged"] = result.converged
    provenance["reseed_events"] = len(result.reseed_events)
    return atoms, result, solution


def _finish_result(atoms: np.ndarray, solver: BarycenterResult, inputs: Dataset, p: float, approx: ApproxParams) -> BarycenterResult:
    from .ot import barycenter_cost

    measure = DiscreteMeasure.uniform(atoms)
    cost = barycenter_cost(
        inputs, measure, p=p, method="sinkhorn", reg=approx.reg, max_iters=approx.inner_iters
    )
    return BarycenterResult(
        measure=measure,
        cost=cost,
        iterations_run=solver.iterations_run,
        converged=solver.converged,
        objective_trace=solver.objective_trace,
        reseed_events=solver.reseed_events,
    )


def _base_provenance(name: str, data: Dataset, m: int, p: float, seed: int, approx: ApproxParams) -> dict:
    return {
        "pipeline": name,
        "master_seed": seed,
        "k": data.k,
        "n_atoms": [mu.n_atoms for mu in data.measures],
        "dimension": data.dim,
        "m": m,
        "p": p,
        "reg": approx.reg,
        "outer_iters": approx.outer_iters,
        "inner_iters": approx.inner_iters,
        "weights_method": approx.weights_method,
    }


def _check_bounded_dataset(data: Dataset):
    for i, mu in enumerate(data.measures):
        r = np.sqrt(np.max(np.einsum("ij,ij->i", mu.points, mu.points)))
        if r > BOUNDED_RADIUS + 1e-9:
            raise ValueError(
                f"measure {i} has support radius {r:.4g} > {BOUNDED_RADIUS}; rescale the data"
            )


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------


def nonprivate_barycenter(
    data: Dataset,
    m: int,
    p: float = 2.0,
    d_prime: Optional[int] = None,
    approx: ApproxParams = ApproxParams(),
    seed: int = 0,
    keep_intermediates: bool = False,
) -> PipelineReport:
    """The plain approximate barycenter (with optional projection); no privacy."""
    proj_seed, _, solver_seed, _ = _pipeline_seeds(seed)
    prov = _base_provenance("nonprivate", data, m, p, seed, approx)
    atoms, solver, solution = _approx_with_recovery(
        data, m, p, d_prime, approx, proj_seed, solver_seed, prov
    )
    prov["k_prime"] = None
    prov["sigma2"] = None
    result = _finish_result(atoms, solver, data, p, approx)
    return PipelineReport(
        barycenter=result,
        privacy_charged=None,
        strictness="strict",
        provenance=prov,
        intermediates={"solution": solution} if keep_intermediates else None,
    )


def coreset_barycenter(
    data: Dataset,
    m: int,
    p: float = 2.0,
    epsilon: Union[float, Fraction] = 1.0,
    d_prime: Optional[int] = None,
    approx: ApproxParams = ApproxParams(),
    seed: int = 0,
    coreset_config: Optional[CoresetConfig] = None,
    noise_off: bool = False,
    keep_intermediates: bool = False,
) -> PipelineReport:
    """Pure-DP barycenter through per-distribution private coresets.

    Each input is privatized at the full budget (the subpopulations are
    disjoint, so the charges compose in parallel); everything downstream of
    the coresets is post-processing.  With ``noise_off`` the coresets are
    the inputs themselves, which reproduces ``nonprivate_barycenter`` for
    equal seeds.
    """
    _check_bounded_dataset(data)
    proj_seed, private_seed, solver_seed, _ = _pipeline_seeds(seed)
    prov = _base_provenance("coreset", data, m, p, seed, approx)
    prov["epsilon"] = float(epsilon)
    ledger = BudgetLedger()

    if noise_off:
        private = data
        strict = "strict"
        prov["noise_off"] = True
    else:
        prov["noise_off"] = False
        template = coreset_config or CoresetConfig(epsilon=epsilon, subsample_to=data.n_atoms)
        strict = "strict" if template.noise.strict else "heuristic"
        child_seeds = private_seed.spawn(data.k)
        coresets = []
        for i, mu in enumerate(data.measures):
            cfg = replace(template, epsilon=Fraction(epsilon), seed=_seed_int(child_seeds[i]))
            sub = BudgetLedger()
            coresets.append(build_coreset(mu, cfg, ledger=sub))
            eps_i, _ = sub.total_exact()
            ledger.charge(f"coreset[{i}]", eps_i, group="disjoint-distributions")
        private = Dataset(coresets, beta=data.beta, require_equal_atoms=False)
        prov["coreset_sizes"] = [c.n_atoms for c in coresets]

    atoms, solver, solution = _approx_with_recovery(
        private, m, p, d_prime, approx, proj_seed, solver_seed, prov
    )
    prov["k_prime"] = None
    prov["sigma2"] = None
    prov["ledger"] = ledger.to_records()
    result = _finish_result(atoms, solver, private, p, approx)
    return PipelineReport(
        barycenter=result,
        privacy_charged=None if noise_off else ledger.total(),
        strictness=strict,
        provenance=prov,
        ledger=ledger,
        intermediates=(
            {"private_measures": private, "solution": solution} if keep_intermediates else None
        ),
    )


def _perturbed_pipeline(
    name: str,
    data: Dataset,
    inputs: Dataset,
    m: int,
    p: float,
    k_prime: int,
    budget: PrivacyBudget,
    d_prime: Optional[int],
    approx: ApproxParams,
    seed: int,
    noise_off: bool,
    heuristic_multiplier: float,
    extra_prov: dict,
    keep_intermediates: bool,
) -> PipelineReport:
    proj_seed, _, solver_seed, noise_seed = _pipeline_seeds(seed)
    prov = _base_provenance(name, data, m, p, seed, approx)
    prov.update(extra_prov)
    atoms, solver, solution = _approx_with_recovery(
        inputs, m, p, d_prime, approx, proj_seed, solver_seed, prov
    )
    ledger = BudgetLedger()
    if noise_off:
        noised = atoms
        sigma2 = 0.0
        prov["noise_off"] = True
    else:
        prov["noise_off"] = False
        d = data.dim
        sensitivity = math.sqrt(m) / (data.k * k_prime)
        sigma2 = output_noise_variance(m, data.k, k_prime, budget.epsilon, budget.delta)
        rng = np.random.default_rng(noise_seed)
        stacked = gaussian_mechanism(
            atoms.ravel(), sensitivity, budget, rng, heuristic_multiplier=heuristic_multiplier
        )
        noised = stacked.reshape(m, d)
        ledger.charge("output perturbation", Fraction(budget.epsilon), Fraction(budget.delta))
    prov["k_prime"] = k_prime
    prov["sigma2"] = sigma2
    prov["heuristic_multiplier"] = heuristic_multiplier
    prov["ledger"] = ledger.to_records()
    result = _finish_result(noised, solver, inputs, p, approx)
    strict = "strict" if (heuristic_multiplier == 1.0 or noise_off) else "heuristic"
    return PipelineReport(
        barycenter=result,
        privacy_charged=None if noise_off else ledger.total(),
        strictness=strict,
        provenance=prov,
        ledger=ledger,
        intermediates={"solution": solution, "pre_noise_atoms": atoms} if keep_intermediates else None,
    )


def output_perturbation_barycenter(
    data: Dataset,
    m: int,
    p: float = 2.0,
    budget: PrivacyBudget = PrivacyBudget(1.0, 1e-6),
    approx: ApproxParams = ApproxParams(),
    seed: int = 0,
    d_prime: Optional[int] = None,
    noise_off: bool = False,
    heuristic_multiplier: float = 1.0,
    keep_intermediates: bool = False,
) -> PipelineReport:
    """(eps, delta)-DP barycenter by Gaussian noise on the support vector.

    The non-private solve runs first; the m*d stacked atom vector (atom-major
    order) then receives noise with variance 2m*ln(1.25/delta)/(eps*k)^2 per
    coordinate, matching L2 sensitivity sqrt(m)/k on supports of diameter 1.
    """
    if not noise_off and budget.delta <= 0:
        raise ValueError("output perturbation requires delta > 0")
    _check_bounded_dataset(data)
    return _perturbed_pipeline(
        "output_perturbation",
        data,
        data,
        m,
        p,
        1,
        budget,
        d_prime,
        approx,
        seed,
        noise_off,
        heuristic_multiplier,
        {"epsilon": budget.epsilon, "delta": budget.delta},
        keep_intermediates,
    )


def subsampled_output_perturbation(
    data: Dataset,
    m: int,
    p: float = 2.0,
    k_prime: int = 1,
    budget: PrivacyBudget = PrivacyBudget(1.0, 1e-6),
    approx: ApproxParams = ApproxParams(),
    seed: int = 0,
    d_prime: Optional[int] = None,
    noise_off: bool = False,
    heuristic_multiplier: float = 1.0,
    keep_intermediates: bool = False,
) -> PipelineReport:
    """Output perturbation after splitting each input into k' disjoint parts.

    The barycenter runs over all k*k' parts and the Gaussian variance drops
    to 2m*ln(1.25/delta)/(eps*k*k')^2: each person now sits in one of k*k'
    disjoint subpopulations.
    """
    if not noise_off and budget.delta <= 0:
        raise ValueError("output perturbation requires delta > 0")
    _check_bounded_dataset(data)
    _, private_seed, _, _ = _pipeline_seeds(seed)
    split_seeds = private_seed.spawn(data.k)
    parts = []
    dropped = 0
    for mu, ss in zip(data.measures, split_seeds):
        sub = split_distribution(mu, k_prime, seed=_seed_int(ss))
        dropped += mu.n_atoms - sum(s.n_atoms for s in sub)
        parts.extend(sub)
    inputs = Dataset(parts)
    return _perturbed_pipeline(
        "subsampled_output_perturbation",
        data,
        inputs,
        m,
        p,
        k_prime,
        budget,
        d_prime,
        approx,
        seed,
        noise_off,
        heuristic_multiplier,
        {"epsilon": budget.epsilon, "delta": budget.delta, "dropped_atoms": dropped},
        keep_intermediates,
    )
