"""Experiment configurations, the sweep runner, and evaluation metrics.

A run executes trials x sweep-grid pipeline calls, aggregates per-metric
means and standard deviations, and emits a deterministic CSV table plus a
JSON manifest carrying seeds, budgets, strictness, and wall-clock time.
Everything except the manifest's wall-clock is a pure function of the
configuration, so identical configs give byte-identical tables.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .barycenter import free_support_barycenter
from .coreset import CoresetConfig
from .datagen import gen_circle_instability, gen_counterexample_1d, gen_gaussian_mixture
from .dataio import ingest_measure_csv, write_json
from .measures import Dataset, DiscreteMeasure
from .mechanisms import NoiseSpec, PrivacyBudget, noise_shrink_factor
from .ot import barycenter_cost, exact_ot, wasserstein_p
from .pipelines import (
    ApproxParams,
    coreset_barycenter,
    nonprivate_barycenter,
    output_perturbation_barycenter,
    subsampled_output_perturbation,
)

SCENARIOS = ("synthetic_gaussians", "counterexample_1d", "circle_instability", "custom_csv")
PIPELINES = ("coreset", "output_perturbation", "subsampled", "nonprivate")
SWEEP_PARAMS = ("n", "epsilon", "d_prime", "k_prime")


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str = "synthetic_gaussians"
    pipeline: str = "nonprivate"
    sweep_param: str = "epsilon"
    sweep_values: list = field(default_factory=lambda: [1.0])
    trials: int = 1
    seed: int = 0
    output_dir: str = "."
    # instance parameters
    n: int = 200
    d: int = 2
    k: int = 2
    m: int = 4
    p: float = 2.0
    stddev: float = 0.05
    data_paths: list = field(default_factory=list)
    # privacy parameters
    epsilon: float = 1.0
    delta: Optional[float] = None
    d_prime: Optional[int] = None
    k_prime: int = 1
    heuristic_noise: bool = False
    # solver parameters
    reg: float = 1e-2
    outer_iters: int = 50
    inner_iters: int = 100

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.pipeline not in PIPELINES:
            raise ValueError(f"unknown pipeline {self.pipeline!r}")
        if self.sweep_param not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {self.sweep_param!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.sweep_values:
            raise ValueError("sweep_values must be non-empty")
        if any(v <= 0 for v in self.sweep_values):
            raise ValueError("sweep values must be positive")

    def approx(self) -> ApproxParams:
        return ApproxParams(reg=self.reg, outer_iters=self.outer_iters, inner_iters=self.inner_iters)


def evaluate(
    nu_private: DiscreteMeasure,
    nu_nonprivate: DiscreteMeasure,
    data: Dataset,
    p: float = 2.0,
    method: str = "exact",
    **kwargs,
) -> dict:
    """Barycenter objectives of both candidates plus the W_p between them."""
    if nu_private.dim != nu_nonprivate.dim or nu_private.dim != data.dim:
        raise ValueError("dimension mismatch between candidates and data")
    if method == "exact" and "oracle_cap" not in kwargs:
        cap = max(mu.n_atoms for mu in data.measures) + max(
            nu_private.n_atoms, nu_nonprivate.n_atoms
        )
        kwargs["oracle_cap"] = max(cap + 1, 256)
    between_cap = nu_private.n_atoms + nu_nonprivate.n_atoms + 1
    return {
        "cost_private": barycenter_cost(data, nu_private, p, method, **kwargs),
        "cost_nonprivate": barycenter_cost(data, nu_nonprivate, p, method, **kwargs),
        "w_p_between": wasserstein_p(
            nu_private, nu_nonprivate, p, method="exact", oracle_cap=max(between_cap, 256)
        ),
    }


def _assignment_rows_changed(base: DiscreteMeasure, perturbed: DiscreteMeasure) -> int:
    """Rows of the optimal assignment to a fixed uniform target that differ."""
    n = base.n_atoms
    target = DiscreteMeasure.uniform(((np.arange(n) + 0.5) / n - 0.5)[:, None])
    A = exact_ot(base, target, p=2, oracle_cap=4 * n + 4).matrix
    B = exact_ot(perturbed, target, p=2, oracle_cap=4 * n + 4).matrix
    return int(np.sum(np.any(np.abs(A - B) > 1e-12, axis=1)))


def _run_private_pipeline(config: ExperimentConfig, data: Dataset, params: dict, seed: int):
    approx = config.approx()
    mult = noise_shrink_factor(data.dim) if config.heuristic_noise else 1.0
    pipeline = config.pipeline
    if pipeline == "nonprivate":
        return nonprivate_barycenter(
            data, m=config.m, p=config.p, d_prime=params["d_prime"], approx=approx, seed=seed
        )
    if pipeline == "coreset":
        spec = NoiseSpec(heuristic_multiplier=mult)
        cfg = CoresetConfig(
            epsilon=params["epsilon"],
            noise=spec,
            subsample_to=data.n_atoms,
        )
        return coreset_barycenter(
            data,
            m=config.m,
            p=config.p,
            epsilon=params["epsilon"],
            d_prime=params["d_prime"],
            approx=approx,
            seed=seed,
            coreset_config=cfg,
        )
    delta = config.delta if config.delta is not None else 1.0 / params["n"]
    budget = PrivacyBudget(params["epsilon"], delta)
    if pipeline == "output_perturbation":
        return output_perturbation_barycenter(
            data, m=config.m, p=config.p, budget=budget, approx=approx, seed=seed,
            d_prime=params["d_prime"], heuristic_multiplier=mult,
        )
    return subsampled_output_perturbation(
        data, m=config.m, p=config.p, k_prime=params["k_prime"], budget=budget,
        approx=approx, seed=seed, d_prime=params["d_prime"], heuristic_multiplier=mult,
    )


def _one_trial(config: ExperimentConfig, value, grid_seed: int, trial_seed: int) -> dict:
    """One pipeline run at one grid point.

    The instance and the non-private baseline are functions of the grid seed
    only; the per-trial stream drives the private pipeline (mechanism noise
    and its solver initialization), so trials average over the privatization
    randomness and the nonprivate pipeline repeats identically.
    """
    params = {
        "n": config.n,
        "epsilon": config.epsilon,
        "d_prime": config.d_prime,
        "k_prime": config.k_prime,
        config.sweep_param: value,
    }
    if config.sweep_param in ("n", "k_prime", "d_prime"):
        params[config.sweep_param] = int(value)

    if config.scenario == "counterexample_1d":
        base, perturbed = gen_counterexample_1d(int(params["n"]))
        return {
            "rows_changed": float(_assignment_rows_changed(base, perturbed)),
            "w1_perturbation": wasserstein_p(base, perturbed, p=1),
        }
    if config.scenario == "circle_instability":
        mu, mu_pert, init = gen_circle_instability(int(params["n"]))
        kwargs = dict(
            m=2, p=2.0, reg=config.reg, outer_iters=config.outer_iters,
            inner_iters=config.inner_iters, init=init, seed=grid_seed,
        )
        a = free_support_barycenter(Dataset([mu]), **kwargs)
        b = free_support_barycenter(Dataset([mu_pert]), **kwargs)
        disp = np.linalg.norm(a.measure.points - b.measure.points, axis=1)
        return {"min_displacement": float(disp.min()), "max_displacement": float(disp.max())}

    if config.scenario == "custom_csv":
        if not config.data_paths:
            raise ExperimentError("custom_csv scenario needs data_paths")
        data = Dataset(
            [ingest_measure_csv(p) for p in config.data_paths], require_equal_atoms=False
        )
    else:
        rng = np.random.default_rng(grid_seed)
        data = Dataset(
            [
                gen_gaussian_mixture(
                    int(params["n"]), config.d, stddev=config.stddev,
                    seed=int(rng.integers(2**32)),
                )
                for _ in range(config.k)
            ]
        )

    pipeline_seed = grid_seed if config.pipeline == "nonprivate" else trial_seed
    report = _run_private_pipeline(config, data, params, pipeline_seed)
    baseline = nonprivate_barycenter(
        data, m=config.m, p=config.p, d_prime=params["d_prime"],
        approx=config.approx(), seed=grid_seed,
    )
    metrics = evaluate(report.barycenter.measure, baseline.barycenter.measure, data, p=config.p)
    if report.privacy_charged is not None:
        metrics["epsilon_charged"] = report.privacy_charged.epsilon
    return metrics


def run_experiment(config: ExperimentConfig) -> dict:
    """Execute the sweep, write ``results.csv`` and ``manifest.json``.

    Returns a summary dict.  Any trial failure writes a partial-results
    marker and raises ExperimentError.
    """
    t_start = time.time()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / "results.csv"
    manifest_path = out_dir / "manifest.json"
    marker_path = out_dir / "results.partial"

    master = np.random.SeedSequence(config.seed)
    grid_seeds = master.spawn(len(config.sweep_values))

    rows = []
    completed = 0
    try:
        for gi, value in enumerate(config.sweep_values):
            children = grid_seeds[gi].spawn(config.trials + 1)
            grid_seed = int(children[0].generate_state(1)[0])
            per_metric: dict[str, list] = {}
            for t in range(config.trials):
                metrics = _one_trial(
                    config, value, grid_seed, int(children[t + 1].generate_state(1)[0])
                )
                for key, val in metrics.items():
                    per_metric.setdefault(key, []).append(val)
                completed += 1
            for metric in sorted(per_metric):
                vals = np.asarray(per_metric[metric], dtype=np.float64)
                rows.append(
                    {
                        "param": config.sweep_param,
                        "value": value,
                        "metric": metric,
                        "mean": float(vals.mean()),
                        "std": float(vals.std(ddof=0)),
                        "trials": config.trials,
                    }
                )
    except Exception as exc:
        marker_path.write_text(
            f"partial results: failed after {completed} trials: {exc}\n"
        )
        raise ExperimentError(f"experiment aborted: {exc}") from exc

    with results_path.open("w") as fh:
        fh.write(f"# seed={config.seed}\n")
        fh.write(f"# version={__version__}\n")
        fh.write("param,value,metric,mean,std,trials\n")
        for row in rows:
            fh.write(
                f"{row['param']},{row['value']!r},{row['metric']},"
                f"{row['mean']!r},{row['std']!r},{row['trials']}\n"
            )

    manifest = {
        "config": asdict(config),
        "version": __version__,
        "master_seed": config.seed,
        "strictness": "heuristic" if config.heuristic_noise else "strict",
        "wall_clock_seconds": time.time() - t_start,
        "rows": len(rows),
    }
    write_json(manifest, manifest_path)
    if marker_path.exists():
        marker_path.unlink()
    return {"results": str(results_path), "manifest": str(manifest_path), "rows": len(rows)}
