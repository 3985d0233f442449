import numpy as np
import pytest

from latgauss.errors import DimensionError
from latgauss.models import (
    DeepLatentGaussian,
    LatentGaussian,
    read_samples_csv,
    sample_dlg,
    sample_dlg_batch,
    sample_x,
    sample_x_batch,
    whp_norm_fraction,
    write_samples_csv,
)
from latgauss.nets import identity_net, linear_net, scale_net, tanh_residual_net
from latgauss.rng import NoiseStream, ZeroStream


def test_latent_gaussian_validation():
    with pytest.raises(ValueError):
        LatentGaussian(identity_net(2), beta=0.0)
    with pytest.raises(DimensionError):
        LatentGaussian(linear_net(np.ones((2, 3)), np.zeros(2)), beta=0.1)


def test_sample_x_identity_moments():
    # x = z + beta xi with z, xi standard normal: Var(x) = 1 + beta^2
    model = LatentGaussian(identity_net(1), beta=0.5)
    _, X = sample_x_batch(model, NoiseStream(0), 40_000)
    var = X.var()
    want = 1.0 + 0.25
    assert abs(X.mean()) <= 4 * np.sqrt(want / X.size)
    assert abs(var - want) <= 5 * want * np.sqrt(2.0 / X.size)


def test_sample_x_batch_matches_scalar():
    model = LatentGaussian(tanh_residual_net(2, 0.5), beta=0.1)
    s = NoiseStream(4)
    Z, X = sample_x_batch(model, s, 5)
    for i in range(5):
        z, x = sample_x(model, s, i)
        assert np.array_equal(Z[i], z) and np.array_equal(X[i], x)


def test_dlg_stage_chaining_and_eval():
    # two deterministic stages compose like function application
    dlg = DeepLatentGaussian([(scale_net(2, 2.0), 0.0), (tanh_residual_net(2, 0.5), 0.0)])
    z = np.array([0.3, -0.4])
    want = tanh_residual_net(2, 0.5).eval(scale_net(2, 2.0).eval(z))
    assert np.allclose(sample_dlg(dlg, z, ZeroStream()), want)


def test_dlg_dimension_mismatch():
    with pytest.raises(DimensionError):
        DeepLatentGaussian(
            [(linear_net(np.ones((3, 2)), np.zeros(3)), 0.0), (identity_net(2), 0.0)]
        )


def test_dlg_batch_matches_scalar():
    dlg = DeepLatentGaussian([(tanh_residual_net(2, 0.5), 0.3), (identity_net(2), 0.1)])
    s = NoiseStream(9)
    Z = np.array([[0.1, 0.2], [-0.5, 0.4], [1.0, -1.0]])
    batch = sample_dlg_batch(dlg, Z, s)
    for i in range(3):
        assert np.array_equal(batch[i], sample_dlg(dlg, Z[i], s, draw=i))


def test_dlg_noise_variance():
    dlg = DeepLatentGaussian([(identity_net(1), 0.25)])
    out = sample_dlg_batch(dlg, np.zeros((30_000, 1)), NoiseStream(2))
    assert abs(out.var() - 0.25) <= 5 * 0.25 * np.sqrt(2.0 / out.size)


def test_whp_norm_fraction():
    model = LatentGaussian(tanh_residual_net(3, 0.5), beta=0.1)
    rep = whp_norm_fraction(model, M=1.5, count=5000, stream=NoiseStream(1))
    assert rep["fraction_within"] == 1.0  # 12(M+beta) sqrt d is a >10 sigma radius
    assert rep["fraction_within"] >= rep["lower_bound"]


def test_samples_csv_round_trip(tmp_path):
    path = tmp_path / "s.csv"
    data = np.random.default_rng(0).normal(size=(20, 3))
    write_samples_csv(path, data, sidecar={"note": "test"})
    back = read_samples_csv(path)
    assert np.array_equal(back, data)  # repr round-trips float64 exactly
    assert (tmp_path / "s.csv.json").exists()
