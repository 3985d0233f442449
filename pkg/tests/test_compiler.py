import numpy as np
import pytest

from conftest import tanh_problem
from latgauss import nets
from latgauss.compiler import (
    add_networks,
    compile_encoder,
    compose,
    derivative_network,
    equivalence_deviation,
    identity_chain,
    jacobian_network,
    load_encoder,
    manifest,
    mul_networks,
    pad_depth,
    parallel,
    run_encoder,
    save_encoder,
    step_network,
)
from latgauss.errors import UnsupportedDifferentiation
from latgauss.invert import GdPlan, gd_invert, make_gd_plan
from latgauss.nets import Layer, Network
from latgauss.potential import refine_inverse, region, set_inverse
from latgauss.rng import NoiseStream
from latgauss.sampler import SamplerPlan, make_sampler_plan

rng = np.random.default_rng(7)


def generator_cases():
    return {
        "identity": nets.identity_net(3),
        "linear": nets.linear_net(np.array([[1.5, -0.3], [0.2, 0.9]]), np.array([0.1, -0.2])),
        "tanh_residual": nets.tanh_residual_net(3, 0.4),
        "random_smooth": nets.random_smooth_net(2, seed=3, hidden=5),
        "random_residual": nets.random_residual_tanh_net(2, seed=9, alpha=0.5),
    }


def test_identity_chain_and_pad():
    net = identity_chain(3, 4)
    Z = rng.normal(size=(5, 3))
    assert np.array_equal(net.eval_batch(Z), Z)
    padded = pad_depth(nets.tanh_residual_net(2, 0.5), 6)
    assert padded.depth == 6
    Z2 = rng.normal(size=(4, 2))
    assert np.allclose(padded.eval_batch(Z2), nets.tanh_residual_net(2, 0.5).eval_batch(Z2))


def test_parallel_disjoint_slices():
    f = nets.random_smooth_net(2, seed=11, hidden=4)
    g = nets.random_smooth_net(2, seed=12, hidden=3)
    pa = parallel([(f, 0), (g, 2)], 4)
    Z = rng.normal(size=(5, 4))
    want = np.concatenate([f.eval_batch(Z[:, :2]), g.eval_batch(Z[:, 2:])], axis=1)
    assert np.allclose(pa.eval_batch(Z), want, atol=1e-12)


def test_compose_matches_function_composition():
    f = nets.tanh_residual_net(2, 0.5)
    g = nets.random_smooth_net(2, seed=4)
    c = compose(f, g)  # g after f
    Z = rng.normal(size=(6, 2))
    assert np.allclose(c.eval_batch(Z), g.eval_batch(f.eval_batch(Z)), atol=1e-12)


def test_add_networks():
    f = nets.random_smooth_net(2, seed=11, hidden=4)
    g = nets.random_smooth_net(2, seed=12, hidden=3)
    s = add_networks(f, g, 0.7, -1.3)
    Z = rng.normal(size=(8, 2))
    assert np.allclose(
        s.eval_batch(Z), 0.7 * f.eval_batch(Z) - 1.3 * g.eval_batch(Z), atol=1e-12
    )


def test_mul_gadget_accuracy_large_values():
    # ab = ((a+b)^2 - (a-b)^2)/4 through square activations; relative error
    # stays at 1e-10 even at |values| up to 1e3
    f = nets.scale_net(1, 31.0)
    g = nets.linear_net(np.array([[29.0]]), np.array([3.0]))
    prod = mul_networks(f, g)
    z = np.linspace(-32.0, 32.0, 101)[:, None]  # products up to ~ 9.2e5, factors ~1e3
    got = prod.eval_batch(z)
    want = f.eval_batch(z) * g.eval_batch(z)
    rel = np.abs(got - want) / np.maximum(1.0, np.abs(want))
    assert np.max(rel) <= 1e-10


def test_derivative_networks_match_jacobians():
    for name, g in generator_cases().items():
        Z = rng.normal(size=(7, g.input_dim))
        J = g.jacobian_batch(Z)
        for i in range(g.output_dim):
            got = derivative_network(g, i).eval_batch(Z)
            assert np.max(np.abs(got - J[:, i, :])) <= 1e-9, name
        full = jacobian_network(g).eval_batch(Z).reshape(len(Z), g.output_dim, g.input_dim)
        assert np.max(np.abs(full - J)) <= 1e-9, name


def test_derivative_network_mixed_activations():
    W1 = rng.normal(size=(5, 2))
    W2 = rng.normal(size=(2, 5)) * 0.3
    mixed = Network(
        [
            Layer(W1, rng.normal(size=5) * 0.1, ["tanh", "square", "identity", "tanh", "square"]),
            Layer(W2, np.zeros(2), ["identity", "tanh"]),
        ],
        2,
    )
    Z = rng.normal(size=(9, 2)) * 0.7
    J = mixed.jacobian_batch(Z)
    for i in range(2):
        got = derivative_network(mixed, i).eval_batch(Z)
        assert np.max(np.abs(got - J[:, i, :])) <= 1e-9


def test_derivative_network_square_output_layer():
    sqout = Network(
        [
            Layer(rng.normal(size=(3, 3)), np.zeros(3), "tanh"),
            Layer(rng.normal(size=(3, 3)), rng.normal(size=3), "square"),
        ],
        3,
    )
    Z = rng.normal(size=(5, 3)) * 0.5
    J = sqout.jacobian_batch(Z)
    for i in range(3):
        got = derivative_network(sqout, i).eval_batch(Z)
        assert np.max(np.abs(got - J[:, i, :])) <= 1e-9


def test_derivative_network_rejects_sign():
    sign_net = Network([Layer(np.eye(2), np.zeros(2), "sign")], 2)
    with pytest.raises(UnsupportedDifferentiation):
        derivative_network(sign_net, 0)


def test_step_network_exact():
    gen = nets.random_residual_tanh_net(3, seed=21, alpha=0.4)
    x = rng.normal(size=3)
    c1, c2 = 0.95, -0.02
    Z = rng.normal(size=(6, 3))
    want = np.empty_like(Z)
    for r, z in enumerate(Z):
        J = gen.jacobian(z)
        want[r] = c1 * z + c2 * J.T @ (gen.eval(z) - x)

    sn = step_network(gen, c1, c2)  # amortized: input (z, x)
    out = sn.eval_batch(np.concatenate([Z, np.broadcast_to(x, Z.shape)], axis=1))
    assert np.max(np.abs(out[:, :3] - want)) <= 1e-10
    assert np.array_equal(out[:, 3:], np.broadcast_to(x, Z.shape))

    sn_fixed = step_network(gen, c1, c2, x_const=x, extra_carry=2)
    carry = rng.normal(size=(6, 2))
    out2 = sn_fixed.eval_batch(np.concatenate([Z, carry], axis=1))
    assert np.max(np.abs(out2[:, :3] - want)) <= 1e-10
    assert np.array_equal(out2[:, 3:], carry)


def compiled_setup(d=2, gd_steps=40, langevin_steps=150):
    problem = tanh_problem(d=d, beta=0.1, x=[0.8, -0.4][:d])
    plan0 = make_gd_plan(problem)
    gd_plan = GdPlan(eta=plan0.eta, steps=gd_steps, Q=plan0.Q, delta=plan0.delta)
    trace = gd_invert(problem, gd_plan, early_stop=False)
    set_inverse(problem, trace.final)
    reg = region(problem)
    full = make_sampler_plan(problem, reg)
    plan = SamplerPlan(
        horizon=full.horizon,
        h=full.h,
        steps=langevin_steps,
        init_radius=full.init_radius,
        projected=False,
    )
    return problem, reg, gd_plan, plan


@pytest.mark.parametrize("amortized", [True, False])
def test_encoder_equivalence(amortized):
    problem, reg, gd_plan, plan = compiled_setup()
    enc = compile_encoder(problem, gd_plan, plan, amortized=amortized)
    dev = equivalence_deviation(problem, reg, gd_plan, plan, enc, NoiseStream(20260819), draws=32)
    assert dev <= 1e-6


def test_encoder_round_trip_bitwise(tmp_path):
    problem, reg, gd_plan, plan = compiled_setup()
    enc = compile_encoder(problem, gd_plan, plan)
    path = tmp_path / "enc.json"
    save_encoder(enc, path)
    enc2 = load_encoder(path)
    s = NoiseStream(5)
    draws = np.arange(8, dtype=np.uint64)
    assert np.array_equal(
        run_encoder(enc, problem.x, s, draws), run_encoder(enc2, problem.x, s, draws)
    )


def test_manifest_fields():
    problem, reg, gd_plan, plan = compiled_setup(gd_steps=5, langevin_steps=10)
    enc = compile_encoder(problem, gd_plan, plan)
    m = manifest(enc)
    assert m["gd_stage_count"] == 5
    assert m["langevin_stage_count"] == 10
    assert m["total_stages"] == 5 + 10 + 3
    assert m["input_dim"] == 3 * problem.dim  # (z0, x, noise channel)
    assert m["output_dim"] == problem.dim
    assert m["parameter_count"] > 0
