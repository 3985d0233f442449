"""Batch command line front end.

Five subcommands (invert, sample, compile, verify, lowerbound) share one
config schema and one report convention: every report JSON embeds the sha256
of the canonical config, the effective seed, and package versions, and the
same config + seed reproduces the report byte for byte except the timestamp
field. Module errors surface as machine-readable JSON on stdout with a
nonzero exit code.

Chains parallelize across a bounded thread pool sized by `jobs`; the
counter-based noise stream keys every word on the absolute chain index, so
the output is identical for every worker count. Report assembly stays
single-threaded.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata

import numpy as np

from .compiler import compile_encoder, equivalence_deviation, load_encoder, manifest, save_encoder
from .config import RunConfig, load_config
from .errors import LatgaussError, PlanTooLarge, VerificationError
from .experiments import (
    cir_comparison_experiment,
    compiled_vs_direct_experiment,
    exit_fraction_experiment,
    mixing_trend_experiment,
    posterior_tv_experiment,
)
from .invert import GdPlan, gd_invert, make_gd_plan
from .lowerbound import demo_report
from .models import write_samples_csv
from .nets import as_linear
from .pipeline import build_problem, plan_pipeline
from .potential import diagnostics_report, refine_inverse, region_radius, set_inverse
from .rng import NoiseStream
from .sampler import PipelineStages, SamplerPlan, initialize_batch, make_sampler_plan, run_chains
from .verify import build_grid_oracle, chi2_initialization, gaussian_moment_test, linear_posterior, tv_distance

EQUIVALENCE_TOLERANCE = 1e-6


# -- report plumbing ----------------------------------------------------------------


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _report_header(cfg: RunConfig, command: str) -> dict:
    try:
        pkg_version = metadata.version("latgauss")
    except metadata.PackageNotFoundError:
        pkg_version = "unknown"
    return {
        "command": command,
        "config_sha256": config_hash(cfg),
        "seed": cfg.seed,
        "versions": {"latgauss": pkg_version, "numpy": np.__version__},
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }


def _write_report(cfg: RunConfig, name: str, payload: dict) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, name)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _problem_from_config(cfg: RunConfig):
    generator = cfg.build_generator()
    return build_problem(
        generator,
        cfg.beta,
        cfg.x,
        epsilon=cfg.epsilon,
        constants=cfg.constants,
        constants_seed=cfg.seed,
        constants_samples=cfg.constants_samples,
    )


def _chunked_chains(problem, reg, plan, center, stream, stages, total: int, jobs: int):
    """Run `total` chains split across `jobs` workers; output is order- and
    worker-count-independent because noise counters key on absolute index."""
    idx = np.arange(total, dtype=np.uint64)

    def work(chunk):
        Z0 = initialize_batch(problem, reg, center, stream, stages, chunk)
        finals, exited, _ = run_chains(problem, reg, plan, Z0, stream, stages, chains=chunk)
        return finals, exited

    if jobs <= 1 or total < 2 * jobs:
        parts = [work(idx)]
    else:
        chunks = np.array_split(idx, jobs)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(work, chunks))
    finals = np.concatenate([p[0] for p in parts], axis=0)
    exited = np.concatenate([p[1] for p in parts], axis=0)
    return finals, exited


# -- subcommands --------------------------------------------------------------------


def cmd_invert(cfg: RunConfig) -> int:
    problem = _problem_from_config(cfg)
    gd_plan = make_gd_plan(problem, max_steps=cfg.max_gd_steps)
    trace = gd_invert(problem, gd_plan)
    inverse_info = set_inverse(problem, trace.final, validate=trace.converged)

    os.makedirs(cfg.out_dir, exist_ok=True)
    trace_path = os.path.join(cfg.out_dir, "descent_trace.csv")
    trace.write_csv(trace_path)

    report = _report_header(cfg, "invert")
    report.update(
        {
            "plan": {
                "eta": gd_plan.eta,
                "steps": gd_plan.steps,
                "Q": gd_plan.Q,
                "delta": gd_plan.delta,
            },
            "converged": bool(trace.converged),
            "steps_run": int(trace.steps_run),
            "final": trace.final.tolist(),
            "final_objective": float(trace.objectives[-1]),
            "inverse": inverse_info,
            "region_radius": float(region_radius(problem)),
            "trace_csv": trace_path,
        }
    )
    path = _write_report(cfg, "invert_report.json", report)
    print(f"invert: converged={trace.converged} steps={trace.steps_run} report={path}")
    return 0 if trace.converged else 1


def cmd_sample(cfg: RunConfig) -> int:
    problem = _problem_from_config(cfg)
    trace, reg, gd_plan, plan = plan_pipeline(
        problem, gd_max_steps=cfg.max_gd_steps, step_cap=cfg.max_langevin_steps
    )
    stages = PipelineStages(gd_plan.steps, plan.steps)
    stream = NoiseStream(cfg.seed + 1)
    finals, exited = _chunked_chains(
        problem, reg, plan, trace.final, stream, stages, cfg.samples, cfg.jobs
    )

    os.makedirs(cfg.out_dir, exist_ok=True)
    samples_path = os.path.join(cfg.out_dir, "samples.csv")
    write_samples_csv(
        samples_path,
        finals,
        sidecar={"config_sha256": config_hash(cfg), "seed": cfg.seed},
    )

    n = cfg.samples
    frac = float(exited.mean())
    slack = 2.0 * float(np.sqrt(problem.epsilon / (4.0 * n)))
    exit_block = {
        "chains": n,
        "exit_fraction": frac,
        "bound": problem.epsilon / 4.0,
        "threshold": problem.epsilon / 4.0 + slack,
        "pass": bool(frac <= problem.epsilon / 4.0 + slack),
    }

    report = _report_header(cfg, "sample")
    report.update(
        {
            "plan": {
                "gd_steps": gd_plan.steps,
                "langevin_steps": plan.steps,
                "h": plan.h,
                "horizon": plan.horizon,
                "init_radius": plan.init_radius,
            },
            "samples_csv": samples_path,
            "exit": exit_block,
        }
    )
    if problem.dim <= 2:
        oracle = build_grid_oracle(problem)
        tv = tv_distance(finals, oracle)
        report["tv"] = {
            "tv": float(tv),
            "threshold": problem.epsilon / 2.0 + 0.03,
            "pass": bool(tv <= problem.epsilon / 2.0 + 0.03),
        }
    else:
        report["tv"] = {"skipped": "grid oracle supports dimension 1 and 2 only"}

    path = _write_report(cfg, "sample_report.json", report)
    print(f"sample: n={n} exit_fraction={frac:.4g} report={path}")
    return 0


def cmd_compile(cfg: RunConfig) -> int:
    problem = _problem_from_config(cfg)
    gd_steps = cfg.compile_opts.get("gd_steps", 10)
    langevin_steps = cfg.compile_opts.get("langevin_steps", 50)
    amortized = cfg.compile_opts.get("amortized", True)
    if gd_steps > cfg.max_gd_steps:
        raise PlanTooLarge(
            "compile descent stage count exceeds the configured cap",
            steps=gd_steps,
            cap=cfg.max_gd_steps,
        )
    if langevin_steps > cfg.max_langevin_steps:
        raise PlanTooLarge(
            "compile chain stage count exceeds the configured cap",
            steps=langevin_steps,
            cap=cfg.max_langevin_steps,
        )

    base = make_gd_plan(problem, max_steps=cfg.max_gd_steps)
    gd_plan = GdPlan(eta=base.eta, steps=gd_steps, Q=base.Q, delta=base.delta)
    trace = gd_invert(problem, gd_plan, early_stop=False)
    set_inverse(problem, trace.final, validate=False)
    from .potential import region as region_of

    reg = region_of(problem)
    full = make_sampler_plan(problem, reg, step_cap=cfg.max_langevin_steps)
    plan = SamplerPlan(
        horizon=full.horizon,
        h=full.h,
        steps=langevin_steps,
        init_radius=full.init_radius,
        projected=False,
    )
    encoder = compile_encoder(problem, gd_plan, plan, amortized=amortized)

    # Self-test gates the artifact: no encoder file unless the compiled network
    # reproduces the direct pipeline on shared noise.
    stream_seed = cfg.seed + 2
    deviation = equivalence_deviation(
        problem, reg, gd_plan, plan, encoder, NoiseStream(stream_seed), draws=16
    )
    if deviation > EQUIVALENCE_TOLERANCE:
        raise VerificationError(
            "compiled encoder disagrees with the direct pipeline",
            max_relative_deviation=float(deviation),
            tolerance=EQUIVALENCE_TOLERANCE,
        )

    os.makedirs(cfg.out_dir, exist_ok=True)
    encoder_path = os.path.join(cfg.out_dir, "encoder.json")
    save_encoder(encoder, encoder_path)
    reloaded = load_encoder(encoder_path)
    deviation_reloaded = equivalence_deviation(
        problem, reg, gd_plan, plan, reloaded, NoiseStream(stream_seed), draws=16
    )
    round_trip_ok = deviation_reloaded == deviation

    report = _report_header(cfg, "compile")
    report.update(
        {
            "manifest": manifest(encoder),
            "encoder_json": encoder_path,
            "self_test": {
                "draws": 16,
                "max_relative_deviation": float(deviation),
                "tolerance": EQUIVALENCE_TOLERANCE,
                "pass": True,
                "round_trip_identical": bool(round_trip_ok),
            },
        }
    )
    path = _write_report(cfg, "compile_report.json", report)
    print(
        f"compile: stages={report['manifest']['total_stages']} "
        f"deviation={deviation:.3g} report={path}"
    )
    return 0 if round_trip_ok else 1


_EXPERIMENTS = {
    "exit": lambda problem, cfg: exit_fraction_experiment(
        problem, NoiseStream(cfg.seed + 11), chains=cfg.chains
    ),
    "tv": lambda problem, cfg: posterior_tv_experiment(
        problem, NoiseStream(cfg.seed + 12), samples=cfg.samples
    ),
    "mixing": lambda problem, cfg: mixing_trend_experiment(
        problem, NoiseStream(cfg.seed + 13), chains=cfg.chains
    ),
    "cir": lambda problem, cfg: cir_comparison_experiment(problem, NoiseStream(cfg.seed + 14)),
    "compiled": lambda problem, cfg: compiled_vs_direct_experiment(
        problem,
        NoiseStream(cfg.seed + 15),
        gd_steps=cfg.compile_opts.get("gd_steps", 10),
        langevin_steps=cfg.compile_opts.get("langevin_steps", 50),
        amortized=cfg.compile_opts.get("amortized", True),
    ),
}


def cmd_verify(cfg: RunConfig) -> int:
    # validate experiment names before any heavy work
    for name in cfg.experiments:
        if name not in _EXPERIMENTS:
            raise LatgaussError(
                f"unknown experiment {name!r}; choose from {sorted(_EXPERIMENTS)}"
            )
    problem = _problem_from_config(cfg)
    trace, reg, gd_plan, plan = plan_pipeline(
        problem, gd_max_steps=cfg.max_gd_steps, step_cap=cfg.max_langevin_steps
    )
    # the Taylor and Hessian checks expand around an exact stationary point;
    # the descent output is only within m * radius / 4, so polish it first.
    # chi2 below keeps trace.final: its subject is the actual chain start.
    set_inverse(problem, refine_inverse(problem, trace.final))

    report = _report_header(cfg, "verify")
    diag = diagnostics_report(problem, points=100, seed=cfg.seed)
    diag["pass"] = bool(
        diag["admissible"]
        and diag["hessian_min_eigenvalue"] >= 1.0 - 1e-8
        and diag["taylor_worst_ratio"] <= 1.0 + 1e-9
    )
    report["diagnostics"] = diag

    if problem.dim == 1:
        log_sqrt_chi2, bound = chi2_initialization(problem, reg, trace.final)
        report["chi2"] = {
            "log_sqrt_chi2": log_sqrt_chi2,
            "bound": bound,
            "pass": bool(log_sqrt_chi2 <= bound),
        }

    linear = as_linear(problem.model.generator)
    if linear is not None and problem.dim <= 4:
        A, b = linear
        mean, cov = linear_posterior(A, b, problem.beta, problem.x)
        stages = PipelineStages(gd_plan.steps, plan.steps)
        stream = NoiseStream(cfg.seed + 1)
        # the 10% covariance gate needs the sampling noise sqrt(2/n) well
        # below it; 4000 chains put the gate past three sigma after the
        # O(h) discretization bias
        moment_chains = max(cfg.chains, 4000)
        finals, _ = _chunked_chains(
            problem, reg, plan, trace.final, stream, stages, moment_chains, cfg.jobs
        )
        report["moments"] = gaussian_moment_test(finals, mean, cov)

    failed = []
    if cfg.experiments:
        report["experiments"] = {}
        for name in cfg.experiments:
            result = _EXPERIMENTS[name](problem, cfg)
            report["experiments"][name] = result
            if not result.get("pass", True):
                failed.append(name)

    ok = (
        diag["pass"]
        and report.get("chi2", {}).get("pass", True)
        and report.get("moments", {}).get("pass", True)
        and not failed
    )
    report["pass"] = bool(ok)
    path = _write_report(cfg, "verify_report.json", report)
    print(f"verify: pass={ok} failed_experiments={failed} report={path}")
    return 0 if ok else 1


def cmd_lowerbound(cfg: RunConfig) -> int:
    lb = cfg.lowerbound_opts
    report = _report_header(cfg, "lowerbound")
    demo = demo_report(
        d=lb.get("d", 8),
        beta=lb.get("beta", 0.05),
        rotation=lb.get("rotation", 3),
        mask=lb.get("mask", 0b10110100),
        trials=lb.get("trials", 200),
        closeness_samples=lb.get("closeness_samples", 20_000),
        seed=cfg.seed,
    )
    if not demo["beta_small_flag"]:
        demo["warning"] = "beta * sqrt(d) >= 0.1: smallness condition violated, results indicative only"
    report["demo"] = demo
    path = _write_report(cfg, "lowerbound_report.json", report)
    print(f"lowerbound: d={demo['d']} beta_small={demo['beta_small_flag']} report={path}")
    return 0


_DISPATCH = {
    "invert": cmd_invert,
    "sample": cmd_sample,
    "compile": cmd_compile,
    "verify": cmd_verify,
    "lowerbound": cmd_lowerbound,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latgauss",
        description="Langevin posterior sampling for latent Gaussian models: "
        "inversion, sampling, network compilation, verification, and the "
        "sign-generator demo.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "invert": "gradient descent inversion of the generator at x",
        "sample": "full pipeline: invert, plan, run chains, emit samples",
        "compile": "compile the pipeline into one feedforward network artifact",
        "verify": "diagnostics, chi-square and moment checks, optional experiments",
        "lowerbound": "sign-generator enumeration and retry study",
    }
    for name in _DISPATCH:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=True, help="path to the JSON run config")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="override the output directory")
        sp.add_argument("--jobs", type=int, default=None, help="worker pool size")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out, args.jobs)
        return _DISPATCH[args.command](cfg)
    except LatgaussError as exc:
        print(json.dumps(exc.as_dict(), indent=2, sort_keys=True, default=_json_default))
        return 1


if __name__ == "__main__":
    sys.exit(main())
