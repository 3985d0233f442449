import numpy as np
import pytest

from conftest import TANH_CONSTANTS, identity_problem, scale_problem, tanh_problem
from latgauss.errors import DimensionError
from latgauss.experiments import (
    cir_comparison_experiment,
    compiled_vs_direct_experiment,
    exit_fraction_experiment,
    mixing_trend_experiment,
    posterior_tv_experiment,
)
from latgauss.nets import tanh_residual_net
from latgauss.pipeline import build_problem, plan_pipeline, run_direct_pipeline
from latgauss.rng import NoiseStream
from latgauss.sampler import SamplerPlan


def shortened(problem, steps, projected=False, **kwargs):
    """Plans with the Langevin leg cut to `steps`; the chain relaxes in about
    1/epsilon steps so this keeps unit tests fast without moving the target."""
    trace, reg, gd_plan, plan = plan_pipeline(problem, projected=projected, **kwargs)
    short = SamplerPlan(
        horizon=plan.horizon,
        h=plan.h,
        steps=min(steps, plan.steps),
        init_radius=plan.init_radius,
        projected=projected,
    )
    return gd_plan, short


def test_build_problem_uses_supplied_constants():
    net = tanh_residual_net(2, 0.5)
    prob = build_problem(net, 0.1, np.array([0.9, 0.9]), constants=TANH_CONSTANTS)
    assert prob.constants is TANH_CONSTANTS
    assert prob.dim == 2


def test_build_problem_estimates_constants():
    net = tanh_residual_net(1, 0.5)
    prob = build_problem(net, 0.1, np.array([0.9]), constants_samples=512)
    c = prob.constants
    assert 0.9 <= c.m <= 1.05
    assert 1.3 <= c.M <= 1.5 + 1e-9
    assert c.M2 <= 0.39
    assert c.M3 <= 1.1


def test_plan_pipeline_deterministic():
    a = plan_pipeline(tanh_problem(d=2, x=[0.9, -0.4]))
    b = plan_pipeline(tanh_problem(d=2, x=[0.9, -0.4]))
    assert np.array_equal(a[0].final, b[0].final)
    assert a[3].h == b[3].h and a[3].steps == b[3].steps
    assert a[1].radius == b[1].radius


def test_plan_pipeline_projected_flag_only_flips_projection():
    prob1 = tanh_problem(d=1)
    prob2 = tanh_problem(d=1)
    _, _, _, free = plan_pipeline(prob1, projected=False)
    _, _, _, proj = plan_pipeline(prob2, projected=True)
    assert not free.projected and proj.projected
    assert free.h == proj.h and free.steps == proj.steps


def test_run_direct_pipeline_shapes_and_snapshots():
    prob = identity_problem(d=2, x=[0.5, -0.5])
    gd_plan, plan = shortened(prob, 50)
    prob2 = identity_problem(d=2, x=[0.5, -0.5])
    res = run_direct_pipeline(
        prob2,
        NoiseStream(3),
        chains=16,
        gd_plan=gd_plan,
        plan=plan,
        snapshot_steps=[10, 50],
    )
    assert res.finals.shape == (16, 2)
    assert res.start.shape == (16, 2)
    assert res.exited.shape == (16,) and res.exited.dtype == bool
    assert set(res.snapshots) == {10, 50}
    assert res.snapshots[10].shape == (16, 2)
    assert np.array_equal(res.snapshots[50], res.finals)
    assert res.stages.total == gd_plan.steps + plan.steps + 3


def test_pipeline_repeatable_for_fixed_seed():
    def run():
        prob = tanh_problem(d=1)
        gd_plan, plan = shortened(prob, 40)
        prob2 = tanh_problem(d=1)
        return run_direct_pipeline(
            prob2, NoiseStream(7), chains=8, gd_plan=gd_plan, plan=plan
        ).finals

    assert np.array_equal(run(), run())


def test_exit_fraction_experiment_contract():
    prob = identity_problem(d=1)
    gd_plan, plan = shortened(prob, 600)
    rep = exit_fraction_experiment(
        identity_problem(d=1), NoiseStream(21), chains=400, gd_plan=gd_plan, plan=plan
    )
    assert rep["pass"]
    assert rep["threshold"] == pytest.approx(
        0.1 / 4 + 2 * np.sqrt(0.1 / (4 * 400))
    )
    assert rep["exit_fraction"] <= rep["threshold"]


def test_posterior_tv_experiment_small_run():
    prob = identity_problem(d=1)
    gd_plan, plan = shortened(prob, 3000)
    rep = posterior_tv_experiment(
        identity_problem(d=1), NoiseStream(22), samples=4000, gd_plan=gd_plan, plan=plan
    )
    assert rep["pass"]
    assert rep["tv"] <= rep["threshold"] == pytest.approx(0.08)


def test_posterior_tv_requires_dimension_one():
    with pytest.raises(DimensionError):
        posterior_tv_experiment(identity_problem(d=2, x=[0.5, 0.5]), NoiseStream(1), samples=10)


def test_mixing_trend_experiment_small_run():
    prob = identity_problem(d=1)
    gd_plan, plan = shortened(prob, 1200, projected=True)
    rep = mixing_trend_experiment(
        identity_problem(d=1),
        NoiseStream(23),
        chains=3000,
        snapshot_steps=[1, 4, 16, 64, 1200],
        gd_plan=gd_plan,
        plan=plan,
    )
    assert rep["pass"]
    assert len(rep["tv"]) == 5 == len(rep["envelope"])
    assert rep["non_increasing"] and rep["below_envelope"]
    assert rep["tv"][-1] < rep["tv"][0]


def test_cir_comparison_experiment():
    # beta = 0.25 keeps h small; the sqrt(h) per-step budget assumes
    # h kappa well under 1
    rep = cir_comparison_experiment(
        scale_problem(a=2.0, d=1, beta=0.25, x=[1.0]), NoiseStream(4), paths=64, steps=2000
    )
    assert rep["pass"]
    assert rep["max_excess_increment"] <= rep["per_step_budget"]
    assert rep["kappa"] == pytest.approx(1 + 4 / 0.0625)


def test_cir_comparison_rejects_nonlinear():
    with pytest.raises(DimensionError):
        cir_comparison_experiment(tanh_problem(d=1), NoiseStream(1))


def test_compiled_vs_direct_experiment():
    rep = compiled_vs_direct_experiment(
        tanh_problem(d=2, x=[0.9, -0.4]),
        NoiseStream(25),
        gd_steps=20,
        langevin_steps=80,
        draws=8,
    )
    assert rep["pass"]
    assert rep["max_relative_deviation"] <= 1e-6
    assert rep["total_stages"] == 20 + 80 + 3
    assert rep["amortized"]
