"""Langevin sampling of the latent posterior, plus the dominating CIR process.

The chain discretizes dz = -grad L(z) dt + sqrt(2) dB by Euler steps

    z' = z - h grad L(z) + sqrt(2 h) xi,      xi ~ N(0, I_d),

optionally followed by projection onto the effective ball D (the reflected
variant). Plans fix the horizon and step:

    T = (2 rad)^2 * log(1/eps)
    h = min(eps * beta^2 / (M^2 + m^2),  rad^2 eps^2 / max(d, 1))
    K = ceil(T / h)

The first step term keeps h * ||Hess L|| <= eps; with h * ||Hess|| near one
the Euler chain's stationary variance is inflated by a factor up to two, which
is measurably too coarse for the total-variation gates this package tests
against. Both terms shrink polynomially in eps, matching the accuracy theory.

Chains start at z_init + N where N is uniform in the ball of radius rad/4 and
z_init is the descent output; the squared distance to the inverse is then
stochastically dominated by a Cox-Ingersoll-Ross process, simulated here as a
sum of squared Ornstein-Uhlenbeck coordinates so paths stay nonnegative by
construction.

Noise counters: Langevin step k of chain c draws at (stage_base + k, draw=c);
the ball perturbation draws at (init_stage, draw=c). Stage numbering matches
the compiled encoder's stage positions so both consume identical noise words.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegeneratePlan,
    InitializationError,
    NumericalBlowup,
    PlanTooLarge,
)
from .potential import PosteriorProblem, RegionD, grad_potential_batch
from .rng import ball_points

STEP_CAP_DEFAULT = 10**7


@dataclass
class SamplerPlan:
    horizon: float  # T
    h: float
    steps: int  # K
    init_radius: float  # rad/4, radius of the start perturbation ball
    projected: bool


@dataclass
class PipelineStages:
    """Shared stage numbering for direct chains and compiled encoders.

    Stage 0 zeroes the latent input, stages 1..S are descent steps, stage S+1
    adds the ball perturbation, stages S+2..S+1+K are Langevin steps, and the
    last stage projects the carry channels away. Only the Langevin stages and
    the perturbation consume noise.
    """

    gd_steps: int
    langevin_steps: int

    @property
    def init_stage(self) -> int:
        return self.gd_steps + 1

    def langevin_stage(self, k: int) -> int:
        return self.gd_steps + 2 + k

    @property
    def total(self) -> int:
        return self.gd_steps + self.langevin_steps + 3


@dataclass
class Chain:
    """States of one chain, thinned; the final state is always stored."""

    states: np.ndarray  # (k, d)
    state_steps: np.ndarray  # Langevin step index of each stored state (0 = start)
    exited: bool  # some state left D (always False for projected chains)
    final: np.ndarray

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step"] + [f"z{j}" for j in range(self.states.shape[1])])
            for s, row in zip(self.state_steps, self.states):
                writer.writerow([int(s)] + [repr(float(v)) for v in row])


def make_sampler_plan(
    problem: PosteriorProblem,
    region: RegionD,
    projected: bool = False,
    step_cap: int = STEP_CAP_DEFAULT,
    h_override: float | None = None,
) -> SamplerPlan:
    """Plan from the displayed formulas; h_override replaces the step rule."""
    c = problem.constants
    eps = problem.epsilon
    rad = region.radius
    horizon = (2.0 * rad) ** 2 * np.log(1.0 / eps)
    if h_override is not None:
        h = float(h_override)
        if h <= 0:
            raise ValueError("h_override must be positive")
    else:
        h = min(
            eps * problem.beta**2 / (c.M**2 + c.m**2),
            rad**2 * eps**2 / max(problem.dim, 1),
        )
    if horizon <= 0.0 or h <= 0.0:
        raise DegeneratePlan(
            "planned horizon or step collapsed to zero", horizon=horizon, h=h
        )
    steps = int(np.ceil(horizon / h))
    if steps > step_cap:
        raise PlanTooLarge(
            "planned steps exceed the cap; increase epsilon or raise the cap",
            steps=steps,
            cap=step_cap,
            suggested_epsilon=min(0.9, eps * (steps / step_cap) ** 0.25),
        )
    if steps == 0:
        raise DegeneratePlan("zero Langevin steps planned", horizon=horizon, h=h)
    return SamplerPlan(
        horizon=float(horizon),
        h=float(h),
        steps=steps,
        init_radius=region.radius / 4.0,
        projected=projected,
    )


# -- initialization ---------------------------------------------------------------


def initialize(
    problem: PosteriorProblem,
    region: RegionD,
    z_init: np.ndarray,
    stream,
    stages: PipelineStages,
    chain: int = 0,
) -> np.ndarray:
    """z_init plus a uniform ball perturbation of radius rad/4.

    Precondition (checked observably): ||G(z_init) - x|| <= m * rad/4, which
    certifies ||z_init - zhat|| <= rad/4.
    """
    return initialize_batch(
        problem, region, z_init, stream, stages, np.array([chain], dtype=np.uint64)
    )[0]


def initialize_batch(
    problem: PosteriorProblem,
    region: RegionD,
    z_init: np.ndarray,
    stream,
    stages: PipelineStages,
    chains: np.ndarray,
) -> np.ndarray:
    z_init = np.asarray(z_init, dtype=np.float64)
    residual = float(np.linalg.norm(problem.model.generator.eval(z_init) - problem.x))
    allowed = problem.constants.m * region.radius / 4.0
    if residual > allowed * (1.0 + 1e-9):
        raise InitializationError(
            "start point violates ||G(z_init) - x|| <= m * rad/4",
            residual=residual,
            allowed=allowed,
        )
    noise = ball_points(
        stream, stages.init_stage, chains, problem.dim, region.radius / 4.0
    )
    return z_init[None, :] + noise


# -- steps -------------------------------------------------------------------------


def langevin_step(
    problem: PosteriorProblem, z: np.ndarray, h: float, noise: np.ndarray
) -> np.ndarray:
    """One Euler step z - h grad L(z) + sqrt(2h) * noise."""
    return langevin_step_batch(problem, np.asarray(z)[None, :], h, np.asarray(noise)[None, :])[0]


def langevin_step_batch(
    problem: PosteriorProblem, Z: np.ndarray, h: float, noise: np.ndarray
) -> np.ndarray:
    grad = grad_potential_batch(problem, Z)
    if not np.all(np.isfinite(grad)):
        bad = int(np.argmax(~np.all(np.isfinite(grad), axis=1)))
        raise NumericalBlowup(
            "non-finite potential gradient", state=np.asarray(Z)[bad].tolist()
        )
    return Z - h * grad + np.sqrt(2.0 * h) * noise


def project_ball(Z: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the closed ball; identity inside."""
    offset = Z - center
    norms = np.linalg.norm(offset, axis=-1, keepdims=True)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return center + offset * scale


def projected_step(
    problem: PosteriorProblem,
    region: RegionD,
    z: np.ndarray,
    h: float,
    noise: np.ndarray,
) -> np.ndarray:
    stepped = langevin_step(problem, z, h, noise)
    return project_ball(stepped, region.center, region.radius)


# -- chains ------------------------------------------------------------------------


def run_chain(
    problem: PosteriorProblem,
    region: RegionD,
    plan: SamplerPlan,
    z0: np.ndarray,
    stream,
    stages: PipelineStages,
    chain: int = 0,
    store_every: int | None = None,
) -> Chain:
    finals, exited, stored, stored_steps = _run_chains(
        problem,
        region,
        plan,
        np.asarray(z0, dtype=np.float64)[None, :],
        stream,
        stages,
        np.array([chain], dtype=np.uint64),
        store_every=store_every,
    )
    return Chain(
        states=stored[:, 0, :],
        state_steps=stored_steps,
        exited=bool(exited[0]),
        final=finals[0],
    )


def run_chains(
    problem: PosteriorProblem,
    region: RegionD,
    plan: SamplerPlan,
    Z0: np.ndarray,
    stream,
    stages: PipelineStages,
    chains: np.ndarray | None = None,
    snapshot_steps: list | None = None,
):
    """Run many chains in lockstep (vectorized over the draw axis).

    Returns (finals, exited, snapshots) where snapshots maps requested step
    indices to state arrays. Chain c draws its step-k noise at counter
    (stages.langevin_stage(k), draw=chains[c]).
    """
    Z0 = np.asarray(Z0, dtype=np.float64)
    if chains is None:
        chains = np.arange(len(Z0), dtype=np.uint64)
    snapshots = {}
    if snapshot_steps:
        finals, exited, stored, stored_steps = _run_chains(
            problem, region, plan, Z0, stream, stages, chains, snapshot_list=snapshot_steps
        )
        for idx, s in enumerate(stored_steps):
            snapshots[int(s)] = stored[idx]
    else:
        finals, exited, _, _ = _run_chains(
            problem, region, plan, Z0, stream, stages, chains, store_every=0
        )
    return finals, exited, snapshots


def _run_chains(
    problem,
    region,
    plan,
    Z0,
    stream,
    stages,
    chains,
    store_every=None,
    snapshot_list=None,
):
    K = plan.steps
    if store_every is None:
        store_every = max(1, int(np.ceil(K / 10_000)))
    want = set()
    if snapshot_list is not None:
        want = {int(s) for s in snapshot_list}
        store_every = 0
    Z = Z0.copy()
    center, radius = region.center, region.radius
    sqrt2h = np.sqrt(2.0 * plan.h)
    exited = np.zeros(len(Z), dtype=bool)
    stored, stored_steps = [], []

    def maybe_store(step):
        if snapshot_list is not None:
            if step in want:
                stored.append(Z.copy())
                stored_steps.append(step)
        elif store_every and step % store_every == 0:
            stored.append(Z.copy())
            stored_steps.append(step)

    def check_exit():
        if not plan.projected:
            off = Z - center
            exited[np.einsum("ij,ij->i", off, off) > radius**2] = True

    check_exit()
    maybe_store(0)
    for k in range(K):
        noise = stream.normal_matrix(stages.langevin_stage(k), chains, Z.shape[1])
        grad = grad_potential_batch(problem, Z)
        if not np.all(np.isfinite(grad)):
            bad = int(np.argmax(~np.all(np.isfinite(grad), axis=1)))
            raise NumericalBlowup(
                "non-finite potential gradient during chain run",
                step=k,
                state=Z[bad].tolist(),
            )
        Z = Z - plan.h * grad + sqrt2h * noise
        if plan.projected:
            Z = project_ball(Z, center, radius)
        check_exit()
        maybe_store(k + 1)

    if snapshot_list is None and (not stored_steps or stored_steps[-1] != K):
        stored.append(Z.copy())
        stored_steps.append(K)
    return Z, exited, np.array(stored) if stored else np.empty((0, *Z.shape)), np.array(
        stored_steps, dtype=np.int64
    )


# -- Cox-Ingersoll-Ross by squared Ornstein-Uhlenbeck sums --------------------------


def simulate_cir(
    n_tilde: int,
    w: float,
    x0: float,
    h: float,
    steps: int,
    stream,
    paths: int = 1,
    stage: int = 0,
) -> np.ndarray:
    """Paths of dX = (-w X + N) dt + 2 sqrt(X) dB with N = n_tilde coordinates.

    X is represented as the sum of n_tilde squared OU coordinates

        V_{k+1} = (1 - h w / 2) V_k + sqrt(h) xi,     X_k = sum_i V_{k,i}^2,

    started from V_0 = sqrt(x0 / n_tilde) in every coordinate. Nonnegativity
    is automatic. Returns shape (paths, steps + 1) including X_0. Path p,
    step k draws at counter (stage + k, draw = p).
    """
    if n_tilde < 1:
        raise ValueError("n_tilde must be a positive integer")
    if x0 < 0:
        raise ValueError("x0 must be nonnegative")
    decay = 1.0 - h * w / 2.0
    sqrth = np.sqrt(h)
    V = np.full((paths, n_tilde), np.sqrt(x0 / n_tilde))
    out = np.empty((paths, steps + 1))
    out[:, 0] = np.sum(V * V, axis=1)
    draws = np.arange(paths, dtype=np.uint64)
    for k in range(steps):
        xi = stream.normal_matrix(stage + k, draws, n_tilde)
        V = decay * V + sqrth * xi
        out[:, k + 1] = np.sum(V * V, axis=1)
    return out


def cir_concentration_bound(n_tilde: int, w: float, x0: float, epsilon: float) -> float:
    """Level 2 x0 + (4 N / w) log(4 N / eps) that paths stay below w.p. 1 - eps."""
    return 2.0 * x0 + (4.0 * n_tilde / w) * np.log(4.0 * n_tilde / epsilon)
