"""End-to-end orchestration: inversion, region, plan, chains, in one call.

The CLI, the experiment suite, and the compiler equivalence test all need the
same sequence; keeping it here keeps them byte-identical in how they consume
noise counters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .invert import GdPlan, GdTrace, gd_invert, make_gd_plan
from .models import LatentGaussian
from .nets import MapConstants, Network, estimate_constants
from .potential import PosteriorProblem, RegionD, region, set_inverse
from .sampler import (
    PipelineStages,
    SamplerPlan,
    initialize_batch,
    make_sampler_plan,
    run_chains,
)


def build_problem(
    generator: Network,
    beta: float,
    x: np.ndarray,
    epsilon: float = 0.1,
    constants: MapConstants | None = None,
    constants_seed: int = 0,
    constants_samples: int = 4096,
) -> PosteriorProblem:
    """Problem with constants either supplied or estimated by sampling."""
    model = LatentGaussian(generator, beta)
    if constants is None:
        constants = estimate_constants(
            generator,
            sample_count=constants_samples,
            radius=4.0 + float(np.linalg.norm(x)),
            seed=constants_seed,
        )
    return PosteriorProblem(model, x, constants, epsilon=epsilon)


@dataclass
class PipelineResult:
    trace: GdTrace
    region: RegionD
    gd_plan: GdPlan
    plan: SamplerPlan
    stages: PipelineStages
    start: np.ndarray  # perturbed chain starts, shape (chains, d)
    finals: np.ndarray
    exited: np.ndarray
    snapshots: dict


def plan_pipeline(
    problem: PosteriorProblem,
    gd_plan: GdPlan | None = None,
    plan: SamplerPlan | None = None,
    projected: bool = False,
    gd_max_steps: int = 1_000_000,
    step_cap: int | None = None,
    run_full_descent: bool = False,
):
    """Deterministic half of the pipeline: descent, region, both plans."""
    if gd_plan is None:
        gd_plan = make_gd_plan(problem, max_steps=gd_max_steps)
    trace = gd_invert(problem, gd_plan, early_stop=not run_full_descent)
    set_inverse(problem, trace.final)
    reg = region(problem)
    if plan is None:
        kwargs = {} if step_cap is None else {"step_cap": step_cap}
        plan = make_sampler_plan(problem, reg, **kwargs)
    if projected != plan.projected:
        plan = SamplerPlan(
            horizon=plan.horizon,
            h=plan.h,
            steps=plan.steps,
            init_radius=plan.init_radius,
            projected=projected,
        )
    return trace, reg, gd_plan, plan


def run_direct_pipeline(
    problem: PosteriorProblem,
    stream,
    chains: int,
    gd_plan: GdPlan | None = None,
    plan: SamplerPlan | None = None,
    projected: bool = False,
    snapshot_steps: list | None = None,
    gd_max_steps: int = 1_000_000,
    step_cap: int | None = None,
    run_full_descent: bool = False,
) -> PipelineResult:
    """invert -> region -> plan -> perturbed start -> Langevin chains.

    Stage numbering: descent consumes no noise but owns stages 1..S, the ball
    perturbation sits at S+1, Langevin steps at S+2 and on. S is the PLANNED
    descent length even when early stopping cuts the run short, so plans with
    the same (eta, S, h, K) consume identical counters no matter how fast the
    descent happened to converge.
    """
    trace, reg, gd_plan, plan = plan_pipeline(
        problem,
        gd_plan=gd_plan,
        plan=plan,
        projected=projected,
        gd_max_steps=gd_max_steps,
        step_cap=step_cap,
        run_full_descent=run_full_descent,
    )
    stages = PipelineStages(gd_plan.steps, plan.steps)
    idx = np.arange(chains, dtype=np.uint64)
    Z0 = initialize_batch(problem, reg, trace.final, stream, stages, idx)
    finals, exited, snapshots = run_chains(
        problem, reg, plan, Z0, stream, stages, chains=idx, snapshot_steps=snapshot_steps
    )
    return PipelineResult(
        trace=trace,
        region=reg,
        gd_plan=gd_plan,
        plan=plan,
        stages=stages,
        start=Z0,
        finals=finals,
        exited=exited,
        snapshots=snapshots,
    )
