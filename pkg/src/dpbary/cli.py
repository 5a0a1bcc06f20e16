"""Command-line interface: coreset, barycenter, split, evaluate, experiment.

The default output directory comes from the ``DPBARY_OUTPUT_DIR`` environment
variable (falling back to the working directory).  For the experiment verb,
parameters may come from a JSON config file, from flags, or both; flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .coreset import CoresetConfig, build_coreset, build_counts
from .dataio import emit_measure_csv, ingest_measure_csv, load_region_json, write_json
from .experiments import ExperimentConfig, ExperimentError, evaluate, run_experiment
from .measures import Dataset
from .mechanisms import NoiseSpec, PrivacyBudget, noise_shrink_factor
from .pipelines import (
    ApproxParams,
    coreset_barycenter,
    nonprivate_barycenter,
    output_perturbation_barycenter,
    split_distribution,
    subsampled_output_perturbation,
)


def _out_dir() -> Path:
    return Path(os.environ.get("DPBARY_OUTPUT_DIR", "."))


def _resolve(path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else _out_dir() / p


def _add_common_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--p", type=float, default=2.0, help="Wasserstein exponent")


def _add_solver_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--reg", type=float, default=1e-2, help="entropic regularization")
    parser.add_argument("--outer-iters", type=int, default=50)
    parser.add_argument("--inner-iters", type=int, default=100)


def _cmd_coreset(args) -> int:
    measure = ingest_measure_csv(args.input)
    mult = noise_shrink_factor(measure.dim) if args.heuristic_noise else 1.0
    region = load_region_json(args.region) if args.region else None
    cfg = CoresetConfig(
        epsilon=Fraction(args.epsilon),
        levels_override=args.levels,
        sampler=args.sampler,
        scale_factor=args.scale_factor,
        region=region,
        subsample_to=args.subsample_to,
        noise=NoiseSpec(heuristic_multiplier=mult),
        seed=args.seed,
        level_allocation=args.allocation,
    )
    if args.counts_json:
        counts = build_counts(measure, cfg)
        write_json({"dimension": counts.dimension, "levels": counts.levels, "cells": counts.to_records()}, _resolve(args.counts_json))
    out = build_coreset(measure, cfg)
    strictness = "strict" if mult == 1.0 else "heuristic"
    emit_measure_csv(
        out,
        _resolve(args.output),
        metadata={"seed": args.seed, "version": __version__, "epsilon": args.epsilon, "strictness": strictness},
    )
    print(f"coreset: {out.n_atoms} atoms -> {_resolve(args.output)} [{strictness}]")
    return 0


def _cmd_barycenter(args) -> int:
    data = Dataset([ingest_measure_csv(p) for p in args.inputs], require_equal_atoms=False)
    approx = ApproxParams(reg=args.reg, outer_iters=args.outer_iters, inner_iters=args.inner_iters)
    mult = noise_shrink_factor(data.dim) if args.heuristic_noise else 1.0
    if args.pipeline == "nonprivate":
        report = nonprivate_barycenter(
            data, m=args.m, p=args.p, d_prime=args.d_prime, approx=approx, seed=args.seed
        )
    elif args.pipeline == "coreset":
        cfg = CoresetConfig(
            epsilon=Fraction(args.epsilon),
            subsample_to=data.n_atoms,
            noise=NoiseSpec(heuristic_multiplier=mult),
        )
        report = coreset_barycenter(
            data, m=args.m, p=args.p, epsilon=Fraction(args.epsilon), d_prime=args.d_prime,
            approx=approx, seed=args.seed, coreset_config=cfg,
        )
    else:
        if args.delta is None:
            raise SystemExit("--delta is required for output perturbation pipelines")
        budget = PrivacyBudget(args.epsilon, args.delta)
        if args.pipeline == "output_perturbation":
            report = output_perturbation_barycenter(
                data, m=args.m, p=args.p, budget=budget, approx=approx, seed=args.seed,
                d_prime=args.d_prime, heuristic_multiplier=mult,
            )
        else:
            report = subsampled_output_perturbation(
                data, m=args.m, p=args.p, k_prime=args.k_prime, budget=budget, approx=approx,
                seed=args.seed, d_prime=args.d_prime, heuristic_multiplier=mult,
            )
    emit_measure_csv(
        report.barycenter.measure,
        _resolve(args.output),
        metadata={"seed": args.seed, "version": __version__, "strictness": report.strictness},
    )
    if args.report:
        _resolve(args.report).write_text(report.to_json() + "\n")
    charged = report.privacy_charged
    print(
        f"barycenter: m={args.m} cost={report.barycenter.cost:.6g} "
        f"charged={'-' if charged is None else f'({charged.epsilon}, {charged.delta})'} "
        f"[{report.strictness}] -> {_resolve(args.output)}"
    )
    return 0


def _cmd_split(args) -> int:
    measure = ingest_measure_csv(args.input)
    parts = split_distribution(measure, args.k_prime, seed=args.seed)
    out_dir = _resolve(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for j, part in enumerate(parts):
        emit_measure_csv(part, out_dir / f"part_{j:04d}.csv", metadata={"seed": args.seed, "version": __version__})
    dropped = measure.n_atoms - sum(p.n_atoms for p in parts)
    print(f"split: {len(parts)} parts of {parts[0].n_atoms} atoms, dropped {dropped} -> {out_dir}")
    return 0


def _cmd_evaluate(args) -> int:
    nu_private = ingest_measure_csv(args.private)
    nu_nonprivate = ingest_measure_csv(args.nonprivate)
    data = Dataset([ingest_measure_csv(p) for p in args.data], require_equal_atoms=False)
    metrics = evaluate(nu_private, nu_nonprivate, data, p=args.p, method=args.method)
    payload = {"version": __version__, **metrics}
    if args.output:
        write_json(payload, _resolve(args.output))
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_experiment(args) -> int:
    settings: dict = {}
    if args.config:
        with open(args.config) as fh:
            settings.update(json.load(fh))
    overrides = {
        "scenario": args.scenario,
        "pipeline": args.pipeline,
        "sweep_param": args.sweep_param,
        "sweep_values": args.sweep_values,
        "trials": args.trials,
        "seed": args.seed,
        "output_dir": args.output_dir,
        "n": args.n,
        "d": args.d,
        "k": args.k,
        "m": args.m,
        "p": args.p,
        "stddev": args.stddev,
        "epsilon": args.epsilon,
        "delta": args.delta,
        "d_prime": args.d_prime,
        "k_prime": args.k_prime,
        "heuristic_noise": args.heuristic_noise or None,
        "reg": args.reg,
        "outer_iters": args.outer_iters,
        "inner_iters": args.inner_iters,
        "data_paths": args.data or None,
    }
    settings.update({k: v for k, v in overrides.items() if v is not None})
    settings.setdefault("output_dir", str(_out_dir()))
    settings["heuristic_noise"] = bool(settings.get("heuristic_noise", False))
    config = ExperimentConfig(**settings)
    try:
        summary = run_experiment(config)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"experiment: {summary['rows']} table rows -> {summary['results']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpbary",
        description="Differentially private Wasserstein barycenters of discrete distributions.",
    )
    parser.add_argument("--version", action="version", version=f"dpbary {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    cs = sub.add_parser("coreset", help="build a private coreset of one measure")
    cs.add_argument("--input", required=True, help="measure CSV")
    cs.add_argument("--output", required=True, help="coreset CSV")
    cs.add_argument("--epsilon", type=float, default=1.0)
    cs.add_argument("--levels", type=int, default=None, help="override the partition depth")
    cs.add_argument("--sampler", choices=["cell_uniform", "cell_uniform_scaled"], default="cell_uniform")
    cs.add_argument("--scale-factor", type=float, default=1.0)
    cs.add_argument("--region", default=None, help="region-mask JSON (2-D only)")
    cs.add_argument("--subsample-to", type=int, default=None)
    cs.add_argument("--allocation", choices=["uniform", "geometric"], default="uniform")
    cs.add_argument("--heuristic-noise", action="store_true", help="apply the (240d)^(1/d) noise shrink; voids the formal guarantee")
    cs.add_argument("--counts-json", default=None, help="also export the counts tree")
    _add_common_flags(cs)
    cs.set_defaults(func=_cmd_coreset)

    bc = sub.add_parser("barycenter", help="run a barycenter pipeline")
    bc.add_argument("--inputs", nargs="+", required=True, help="measure CSVs (one per distribution)")
    bc.add_argument("--output", required=True, help="barycenter CSV")
    bc.add_argument("--report", default=None, help="pipeline report JSON")
    bc.add_argument("--pipeline", choices=["nonprivate", "coreset", "output_perturbation", "subsampled"], default="nonprivate")
    bc.add_argument("--m", type=int, required=True, help="barycenter atom count")
    bc.add_argument("--epsilon", type=float, default=1.0)
    bc.add_argument("--delta", type=float, default=None)
    bc.add_argument("--d-prime", type=int, default=None)
    bc.add_argument("--k-prime", type=int, default=1)
    bc.add_argument("--heuristic-noise", action="store_true")
    _add_common_flags(bc)
    _add_solver_flags(bc)
    bc.set_defaults(func=_cmd_barycenter)

    sp = sub.add_parser("split", help="split a measure into disjoint parts")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output-dir", required=True)
    sp.add_argument("--k-prime", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=_cmd_split)

    ev = sub.add_parser("evaluate", help="compare a private and a non-private barycenter")
    ev.add_argument("--private", required=True)
    ev.add_argument("--nonprivate", required=True)
    ev.add_argument("--data", nargs="+", required=True)
    ev.add_argument("--method", choices=["exact", "sinkhorn"], default="exact")
    ev.add_argument("--output", default=None)
    _add_common_flags(ev)
    ev.set_defaults(func=_cmd_evaluate)

    ex = sub.add_parser("experiment", help="run a sweep and emit a report table")
    ex.add_argument("--config", default=None, help="JSON config; flags override it")
    ex.add_argument("--scenario", choices=["synthetic_gaussians", "counterexample_1d", "circle_instability", "custom_csv"], default=None)
    ex.add_argument("--pipeline", choices=["nonprivate", "coreset", "output_perturbation", "subsampled"], default=None)
    ex.add_argument("--sweep-param", choices=["n", "epsilon", "d_prime", "k_prime"], default=None)
    ex.add_argument("--sweep-values", type=float, nargs="+", default=None)
    ex.add_argument("--trials", type=int, default=None)
    ex.add_argument("--seed", type=int, default=None)
    ex.add_argument("--output-dir", default=None)
    ex.add_argument("--n", type=int, default=None)
    ex.add_argument("--d", type=int, default=None)
    ex.add_argument("--k", type=int, default=None)
    ex.add_argument("--m", type=int, default=None)
    ex.add_argument("--p", type=float, default=None)
    ex.add_argument("--stddev", type=float, default=None)
    ex.add_argument("--epsilon", type=float, default=None)
    ex.add_argument("--delta", type=float, default=None)
    ex.add_argument("--d-prime", type=int, default=None)
    ex.add_argument("--k-prime", type=int, default=None)
    ex.add_argument("--heuristic-noise", action="store_true")
    ex.add_argument("--reg", type=float, default=None)
    ex.add_argument("--outer-iters", type=int, default=None)
    ex.add_argument("--inner-iters", type=int, default=None)
    ex.add_argument("--data", nargs="+", default=None, help="measure CSVs for custom_csv")
    ex.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
