"""Gradient-descent inversion of a strongly invertible generator.

The objective is f(z) = ||G(z) - x||^2 / 2 (no prior term). Although f is not
convex, strong invertibility makes its only stationary point the inverse zhat,
and descent from the origin with step 1/Q converges once Q dominates the
curvature along the sweep:

    Q   = M^2 + 2 sqrt(d) M M2 (M/m + 1) ||x|| / m
    eta = 1/Q
    S   = ceil(Q ||x||^2 / (m^4 delta^2))     (target accuracy delta)

Every accepted step must satisfy the adjusted descent inequality
f(z') <= f(z) - ||grad f(z)||^2 / (2Q); a violation means Q was underestimated
(possible with sampled constants) and surfaces as DescentViolation. The
iterates stay in the ball A = { ||z|| <= (M/m + 1) ||x|| / m } and the final
error obeys ||z_S - zhat|| <= sqrt(2 Q f(z_0) / S) / m^2. Convergence is
declared on the observable criterion ||G(z_S) - x|| <= m delta.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DescentViolation, NumericalBlowup
from .potential import PosteriorProblem, region_radius

MAX_STORED_ITERATES = 1024


@dataclass
class GdPlan:
    eta: float
    steps: int
    Q: float
    delta: float


@dataclass
class GdTrace:
    """Descent record. Objectives and gradient norms cover every step; the
    iterate list is thinned to a bounded count (first and last always kept)."""

    iterates: np.ndarray  # (k, d) thinned
    iterate_steps: np.ndarray  # (k,) step index of each stored iterate
    objectives: np.ndarray  # (steps_run + 1,)
    grad_norms: np.ndarray  # (steps_run + 1,)
    converged: bool
    steps_run: int
    final: np.ndarray
    final_in_region: bool | None = None  # ||z_S - center|| <= radius when known

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "objective", "grad_norm"])
            for s, (obj, gn) in enumerate(zip(self.objectives, self.grad_norms)):
                writer.writerow([s, repr(float(obj)), repr(float(gn))])


def make_gd_plan(
    problem: PosteriorProblem, delta: float | None = None, max_steps: int = 10**6
) -> GdPlan:
    """Plan from the curvature formula; delta defaults to a quarter region radius."""
    c = problem.constants
    d = problem.dim
    if delta is None:
        delta = float(region_radius(problem)) / 4.0
    if delta <= 0:
        raise ValueError("delta must be positive")
    xnorm = float(np.linalg.norm(problem.x))
    Q = c.M**2 + 2.0 * np.sqrt(d) * c.M * c.M2 * (c.M / c.m + 1.0) * xnorm / c.m
    steps = int(np.ceil(Q * xnorm**2 / (c.m**4 * delta**2))) if xnorm > 0 else 1
    return GdPlan(eta=1.0 / Q, steps=min(steps, max_steps), Q=float(Q), delta=float(delta))


def sweep_region_bound(problem: PosteriorProblem) -> float:
    """Radius of the ball A that contains every descent iterate."""
    c = problem.constants
    return (c.M / c.m + 1.0) * float(np.linalg.norm(problem.x)) / c.m


def gd_invert(
    problem: PosteriorProblem,
    plan: GdPlan,
    start: np.ndarray | None = None,
    early_stop: bool = True,
) -> GdTrace:
    """Run the descent. Raises DescentViolation if any step breaks the
    adjusted descent inequality, NumericalBlowup on non-finite state.

    With early_stop the loop ends once ||G(z) - x|| <= m * delta; switching it
    off runs exactly plan.steps steps, which is what the compiled encoder
    replays stage for stage.
    """
    g = problem.model.generator
    x = problem.x
    m = problem.constants.m
    z = np.zeros(problem.dim) if start is None else np.asarray(start, dtype=np.float64).copy()

    stride = max(1, plan.steps // MAX_STORED_ITERATES)
    kept, kept_steps = [z.copy()], [0]
    objectives = np.empty(plan.steps + 1)
    grad_norms = np.empty(plan.steps + 1)

    value = g.eval(z)
    r = value - x
    obj = 0.5 * float(r @ r)
    steps_run = 0
    for s in range(plan.steps):
        grad = g.vjp_batch(z[None, :], r[None, :])[1][0]
        gn = float(np.linalg.norm(grad))
        objectives[s] = obj
        grad_norms[s] = gn
        if early_stop and np.sqrt(2.0 * obj) <= m * plan.delta:
            break
        z_next = z - plan.eta * grad
        if not np.all(np.isfinite(z_next)):
            raise NumericalBlowup("non-finite descent iterate", step=s, state=z.tolist())
        r_next = g.eval(z_next) - x
        obj_next = 0.5 * float(r_next @ r_next)
        if obj_next > obj - gn**2 / (2.0 * plan.Q) + 1e-12 * max(1.0, obj):
            raise DescentViolation(
                "descent inequality violated; curvature constant too small",
                step=s,
                objective=obj,
                objective_next=obj_next,
                Q=plan.Q,
            )
        z, r, obj = z_next, r_next, obj_next
        steps_run = s + 1
        if steps_run % stride == 0:
            kept.append(z.copy())
            kept_steps.append(steps_run)

    objectives[steps_run] = obj
    grad_norms[steps_run] = float(
        np.linalg.norm(g.vjp_batch(z[None, :], r[None, :])[1][0])
    )
    if kept_steps[-1] != steps_run:
        kept.append(z.copy())
        kept_steps.append(steps_run)
    converged = bool(np.sqrt(2.0 * obj) <= m * plan.delta)
    return GdTrace(
        iterates=np.array(kept),
        iterate_steps=np.array(kept_steps),
        objectives=objectives[: steps_run + 1].copy(),
        grad_norms=grad_norms[: steps_run + 1].copy(),
        converged=converged,
        steps_run=steps_run,
        final=z,
    )


def invert_with_retries(
    problem: PosteriorProblem,
    delta: float | None = None,
    max_steps: int = 10**6,
    max_retries: int = 10,
    early_stop: bool = True,
) -> tuple[GdTrace, GdPlan]:
    """Invert, doubling Q (and replanning) on each descent violation."""
    plan = make_gd_plan(problem, delta=delta, max_steps=max_steps)
    for attempt in range(max_retries + 1):
        try:
            return gd_invert(problem, plan, early_stop=early_stop), plan
        except DescentViolation:
            if attempt == max_retries:
                raise
            c = problem.constants
            Q = plan.Q * 2.0
            xnorm = float(np.linalg.norm(problem.x))
            steps = int(np.ceil(Q * xnorm**2 / (c.m**4 * plan.delta**2)))
            plan = GdPlan(eta=1.0 / Q, steps=min(steps, max_steps), Q=Q, delta=plan.delta)
    raise AssertionError("unreachable")
