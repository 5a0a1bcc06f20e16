import json
import math
import warnings
from fractions import Fraction

import numpy as np
import pytest

from dpbary.barycenter import free_support_barycenter, solution_weights, cost_of_solution
from dpbary.coreset import CoresetConfig
from dpbary.datagen import gen_circle_instability, gen_gaussian_mixture
from dpbary.measures import Dataset, DiscreteMeasure
from dpbary.mechanisms import NoiseSpec, PrivacyBudget
from dpbary.ot import barycenter_cost, wasserstein_p
from dpbary.pipelines import (
    ApproxParams,
    clusterability_profile,
    coreset_barycenter,
    empirical_convergence_bound,
    nonprivate_barycenter,
    optimal_k_prime,
    output_noise_variance,
    output_perturbation_barycenter,
    split_distribution,
    subsampled_output_perturbation,
)

from helpers import random_uniform_measure

FAST = ApproxParams(reg=5e-3, outer_iters=15, inner_iters=150)


def small_dataset(seed=0, k=2, n=12, d=2):
    rng = np.random.default_rng(seed)
    return Dataset([random_uniform_measure(rng, n, d, bounded=True) for _ in range(k)])


# ---------------------------------------------------------------------------
# closed-form helpers
# ---------------------------------------------------------------------------


def test_output_noise_variance_values():
    assert output_noise_variance(48, 1, 1, 1.0, 1 / 200000) == pytest.approx(
        96 * math.log(250000), rel=1e-12
    )
    assert output_noise_variance(48, 1, 1, 1.0, 1 / 200000) == pytest.approx(1193.2, abs=0.5)
    assert output_noise_variance(48, 1, 1000, 1.0, 5e-6) == pytest.approx(1.193e-3, rel=1e-3)


def test_optimal_k_prime_example():
    assert optimal_k_prime(n=10**5, m=48, d=2, epsilon=1.0, k=1, p=2) == 29


def test_optimal_k_prime_monotone_in_n():
    vals = [optimal_k_prime(n, 8, 2, 1.0, 1, 2) for n in (10**3, 10**4, 10**5, 10**6)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert vals[0] < vals[-1]


def test_optimal_k_prime_clamps_to_one():
    assert optimal_k_prime(n=100, m=4, d=2, epsilon=1000.0, k=10, p=2) == 1


def test_empirical_convergence_bound_formula():
    n, m, p, c, xi = 100, 4, 2.0, 0.0, 0.1
    r = math.sqrt(math.log(40.0) / 200.0)
    eff = (1 - r) * 100
    expected = (9**2 + 3) * math.sqrt(4 / eff) + math.sqrt(math.log(40.0) / (2 * eff)) + r
    assert empirical_convergence_bound(n, m, p, c, xi) == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------------------
# split_distribution
# ---------------------------------------------------------------------------


def test_split_identity_at_one():
    rng = np.random.default_rng(1)
    mu = random_uniform_measure(rng, 10, 2)
    parts = split_distribution(mu, 1, seed=0)
    assert len(parts) == 1
    assert sorted(map(tuple, parts[0].points.tolist())) == sorted(map(tuple, mu.points.tolist()))


def test_split_two_parts_partition_atoms():
    mu = DiscreteMeasure.uniform([[0.0], [1.0], [2.0], [3.0]])
    parts = split_distribution(mu, 2, seed=3)
    assert all(p.n_atoms == 2 for p in parts)
    combined = sorted(x for p in parts for x in p.points[:, 0].tolist())
    assert combined == [0.0, 1.0, 2.0, 3.0]


def test_split_drops_remainder():
    rng = np.random.default_rng(2)
    mu = random_uniform_measure(rng, 11, 2)
    parts = split_distribution(mu, 3, seed=0)
    assert all(p.n_atoms == 3 for p in parts)
    assert sum(p.n_atoms for p in parts) == 9


def test_split_requires_uniform_weights():
    mu = DiscreteMeasure([[0.0], [1.0]], [0.3, 0.7])
    with pytest.raises(ValueError, match="uniform"):
        split_distribution(mu, 2, seed=0)


def test_split_wasserstein_bound():
    # W_p(mu, part) <= D * (1 - floor(n/k')/n)^(1/p) for every part
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(6, 13))
        k_prime = int(rng.integers(2, 4))
        mu = random_uniform_measure(rng, n, 2, bounded=True)
        D = mu.support_diameter()
        bound_mass = 1 - (n // k_prime) / n
        for part in split_distribution(mu, k_prime, seed=seed):
            for p in (1.0, 2.0):
                w = wasserstein_p(mu, part, p=p)
                assert w <= D * bound_mass ** (1 / p) + 1e-9


# ---------------------------------------------------------------------------
# clusterability profile
# ---------------------------------------------------------------------------


def test_clusterability_zero_for_m_atoms():
    mu = DiscreteMeasure.uniform([[0.0, 0.0], [0.3, 0.3], [-0.3, 0.2]])
    assert clusterability_profile(mu, m=3, delta_radius=1e-6) == pytest.approx(0.0)


def test_clusterability_two_far_clusters_single_ball():
    pts = np.concatenate([np.full((5, 2), -0.4), np.full((5, 2), 0.4)])
    mu = DiscreteMeasure.uniform(pts)
    c = clusterability_profile(mu, m=1, delta_radius=0.1)
    assert c >= 0.5 - 1e-12


def test_clusterability_gaussian_tail():
    mu = gen_gaussian_mixture(4000, 2, stddev=0.02, seed=5)
    c = clusterability_profile(mu, m=4, delta_radius=3 * 0.02 * math.sqrt(2))
    # mass outside 3 sigma per coordinate pair is small; greedy stays close
    tail = 1 - (1 - math.exp(-9 / 2))  # chi-square(2) tail at (3*sqrt(2))^2 sigma^2
    assert c == pytest.approx(tail, abs=0.02)


# ---------------------------------------------------------------------------
# nonprivate pipeline and test-mode equivalences
# ---------------------------------------------------------------------------


def test_nonprivate_report_shape():
    data = small_dataset()
    report = nonprivate_barycenter(data, m=3, p=2, approx=FAST, seed=7)
    assert report.privacy_charged is None
    assert report.strictness == "strict"
    assert report.barycenter.measure.n_atoms == 3
    assert report.provenance["pipeline"] == "nonprivate"
    assert report.provenance["projection_skipped"] is True


def test_nonprivate_deterministic():
    data = small_dataset()
    a = nonprivate_barycenter(data, m=3, approx=FAST, seed=5)
    b = nonprivate_barycenter(data, m=3, approx=FAST, seed=5)
    assert np.array_equal(a.barycenter.measure.points, b.barycenter.measure.points)


def test_coreset_noise_off_matches_nonprivate():
    data = small_dataset(seed=3)
    base = nonprivate_barycenter(data, m=3, approx=FAST, seed=11)
    test_mode = coreset_barycenter(data, m=3, epsilon=1.0, approx=FAST, seed=11, noise_off=True)
    assert np.array_equal(base.barycenter.measure.points, test_mode.barycenter.measure.points)
    assert test_mode.privacy_charged is None


def test_output_perturbation_noise_off_matches_nonprivate():
    data = small_dataset(seed=4)
    base = nonprivate_barycenter(data, m=3, approx=FAST, seed=13)
    test_mode = output_perturbation_barycenter(
        data, m=3, budget=PrivacyBudget(1.0, 1e-6), approx=FAST, seed=13, noise_off=True
    )
    assert np.array_equal(base.barycenter.measure.points, test_mode.barycenter.measure.points)


def test_projection_used_when_d_prime_smaller():
    rng = np.random.default_rng(6)
    data = Dataset([random_uniform_measure(rng, 10, 6, bounded=True) for _ in range(2)])
    report = nonprivate_barycenter(data, m=3, d_prime=3, approx=FAST, seed=1)
    assert report.provenance["projection_skipped"] is False
    assert report.provenance["d_prime"] == 3
    assert report.barycenter.measure.dim == 6  # support recovered in ambient space
    with pytest.raises(ValueError, match="d_prime"):
        nonprivate_barycenter(data, m=3, d_prime=7, approx=FAST, seed=1)


# ---------------------------------------------------------------------------
# coreset pipeline
# ---------------------------------------------------------------------------


def test_coreset_pipeline_ledger_exact_for_any_k():
    for k in (1, 3):
        data = small_dataset(seed=10 + k, k=k, n=40)
        report = coreset_barycenter(data, m=2, epsilon=1.0, approx=FAST, seed=2)
        assert report.ledger.matches(PrivacyBudget(1.0))
        assert report.privacy_charged == PrivacyBudget(1.0)
        assert report.strictness == "strict"


def test_coreset_pipeline_heuristic_flagged():
    data = small_dataset(seed=20, n=40)
    cfg = CoresetConfig(
        epsilon=1.0,
        noise=NoiseSpec(heuristic_multiplier=0.25),
        subsample_to=40,
    )
    report = coreset_barycenter(data, m=2, epsilon=1.0, approx=FAST, seed=3, coreset_config=cfg)
    assert report.strictness == "heuristic"
    assert report.ledger.matches(PrivacyBudget(1.0))


def test_coreset_pipeline_emits_finite_cost_mixture_setup():
    # the synthetic-mixture configuration in R^10 with projection to 5 dims
    data = Dataset([gen_gaussian_mixture(200, 10, stddev=0.05, seed=s) for s in range(2)])
    report = coreset_barycenter(
        data,
        m=8,
        epsilon=1.0,
        d_prime=5,
        approx=ApproxParams(reg=0.04, outer_iters=10, inner_iters=100),
        seed=4,
    )
    assert math.isfinite(report.barycenter.cost)
    assert report.provenance["d_prime"] == 5
    assert report.ledger.matches(PrivacyBudget(1.0))


def test_coreset_pipeline_idempotent_reassignment():
    from dpbary.barycenter import support_points

    data = small_dataset(seed=30, n=24)
    report = coreset_barycenter(
        data, m=3, epsilon=2.0, approx=FAST, seed=6, keep_intermediates=True
    )
    private = report.intermediates["private_measures"]
    nu = report.barycenter.measure
    # optimal re-assignment of the pipeline's own output never increases cost
    sol1 = solution_weights(nu, private, p=2, method="exact")
    c1 = cost_of_solution(private, sol1, p=2)
    nu2 = DiscreteMeasure.uniform(support_points(private, sol1, p=2))
    sol2 = solution_weights(nu2, private, p=2, method="exact")
    c2 = cost_of_solution(private, sol2, p=2)
    assert c2 <= c1 + 1e-6


def test_coreset_pipeline_requires_bounded_data():
    rng = np.random.default_rng(31)
    data = Dataset([DiscreteMeasure.uniform(rng.uniform(-2, 2, size=(10, 2)))])
    with pytest.raises(ValueError, match="radius"):
        coreset_barycenter(data, m=2, epsilon=1.0, approx=FAST)


# ---------------------------------------------------------------------------
# output perturbation pipelines
# ---------------------------------------------------------------------------


def test_output_perturbation_ledger_and_sigma():
    data = small_dataset(seed=40, k=2, n=16)
    budget = PrivacyBudget(0.9, 1e-4)
    report = output_perturbation_barycenter(data, m=2, budget=budget, approx=FAST, seed=8)
    assert report.ledger.matches(budget)
    assert report.privacy_charged == budget
    assert report.provenance["sigma2"] == pytest.approx(
        output_noise_variance(2, 2, 1, 0.9, 1e-4)
    )
    assert report.provenance["k_prime"] == 1


def test_output_perturbation_rejects_pure_dp():
    data = small_dataset(seed=41)
    with pytest.raises(ValueError, match="delta"):
        output_perturbation_barycenter(data, m=2, budget=PrivacyBudget(1.0, 0.0), approx=FAST)


def test_output_perturbation_noise_actually_moves_atoms():
    data = small_dataset(seed=42)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        noisy = output_perturbation_barycenter(
            data, m=2, budget=PrivacyBudget(2.0, 1e-4), approx=FAST, seed=9,
            heuristic_multiplier=0.01,
        )
    clean = output_perturbation_barycenter(
        data, m=2, budget=PrivacyBudget(2.0, 1e-4), approx=FAST, seed=9, noise_off=True
    )
    assert not np.array_equal(noisy.barycenter.measure.points, clean.barycenter.measure.points)
    assert noisy.strictness == "heuristic"


def test_subsampled_sigma_matches_formula_and_splits():
    data = small_dataset(seed=43, k=1, n=30)
    budget = PrivacyBudget(0.8, 1e-5)
    report = subsampled_output_perturbation(
        data, m=2, k_prime=3, budget=budget, approx=FAST, seed=10
    )
    assert report.provenance["sigma2"] == pytest.approx(output_noise_variance(2, 1, 3, 0.8, 1e-5))
    assert report.provenance["dropped_atoms"] == 0
    assert report.ledger.matches(budget)


def test_subsampled_reports_dropped_atoms():
    data = small_dataset(seed=44, k=1, n=31)
    report = subsampled_output_perturbation(
        data, m=2, k_prime=3, budget=PrivacyBudget(0.8, 1e-5), approx=FAST, seed=11
    )
    assert report.provenance["dropped_atoms"] == 1


def test_perturbation_cost_gap_bound_monte_carlo():
    # 95th percentile of the noised-cost gap stays under twice the analytic bound
    data = small_dataset(seed=45, k=2, n=10)
    p, m, d = 2.0, 2, 2
    budget = PrivacyBudget(0.9, 1e-3)
    mult = 0.05
    gaps = []
    sigma = None
    for s in range(30):
        report = output_perturbation_barycenter(
            data, m=m, p=p, budget=budget, approx=FAST, seed=100 + s,
            heuristic_multiplier=mult, keep_intermediates=True,
        )
        pre = DiscreteMeasure.uniform(report.intermediates["pre_noise_atoms"])
        gaps.append(
            barycenter_cost(data, report.barycenter.measure, p=p)
            - barycenter_cost(data, pre, p=p)
        )
        sigma = math.sqrt(report.provenance["sigma2"]) * mult
    bound = p * 2 ** (p - 1) * sigma**p * (math.sqrt(d) + math.sqrt(2 * p)) ** p
    assert np.quantile(gaps, 0.95) <= 2 * bound


# ---------------------------------------------------------------------------
# circle instability witness
# ---------------------------------------------------------------------------


def test_circle_instability_moves_every_support_point():
    mu, mu_pert, init = gen_circle_instability(n=8)
    kwargs = dict(m=2, p=2, reg=0.01, outer_iters=100, inner_iters=300, init=init, seed=0)
    base = free_support_barycenter(Dataset([mu]), **kwargs)
    pert = free_support_barycenter(Dataset([mu_pert]), **kwargs)
    disp = np.linalg.norm(base.measure.points - pert.measure.points, axis=1)
    assert float(disp.min()) > 0.1


# ---------------------------------------------------------------------------
# report serialization
# ---------------------------------------------------------------------------


def test_report_json_has_mandatory_provenance():
    data = small_dataset(seed=50, n=20)
    report = coreset_barycenter(data, m=2, epsilon=1.0, approx=FAST, seed=12)
    payload = json.loads(report.to_json())
    prov = payload["provenance"]
    for key in ("master_seed", "d_prime", "k_prime", "sigma2", "solver_iterations", "pipeline"):
        assert key in prov
    assert payload["privacy_charged"]["epsilon"] == 1.0
    assert payload["strictness"] == "strict"
    assert len(payload["barycenter"]["points"]) == 2
