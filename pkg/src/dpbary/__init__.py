"""Differentially private Wasserstein barycenters of discrete distributions."""

__version__ = "0.1.0"

from .measures import Dataset, DiscreteMeasure, mixture
from .ot import (
    TransportPlan,
    barycenter_cost,
    exact_ot,
    sinkhorn_ot,
    total_variation,
    transport_cost,
    wasserstein_p,
)
from .barycenter import (
    BarycenterResult,
    Solution,
    cost_of_projected_solution,
    cost_of_solution,
    free_support_barycenter,
    reconstruct_barycenter,
    solution_weights,
    support_points,
)
from .mechanisms import (
    BudgetLedger,
    NoiseSpec,
    PrivacyBudget,
    amplified_epsilon,
    exponential_mechanism,
    gaussian_mechanism,
    noise_shrink_factor,
    sample_discrete_laplace,
)
from .coreset import (
    CoresetConfig,
    HierarchicalCounts,
    build_coreset,
    build_counts,
    coreset_opt_transfer_check,
    synthesize_measure,
    whp_coreset,
)
from .projection import Projection, jl_dimension, project_measure, sample_projection
from .pipelines import (
    ApproxParams,
    PipelineReport,
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
from .geometry import RegionPolygon, point_in_polygon
from .datagen import (
    gen_circle_instability,
    gen_counterexample_1d,
    gen_gaussian_mixture,
    image_to_measure,
)
from .dataio import emit_measure_csv, ingest_measure_csv
from .experiments import ExperimentConfig, evaluate, run_experiment
