import numpy as np

from latgauss.models import LatentGaussian
from latgauss.nets import MapConstants, identity_net, scale_net, tanh_residual_net
from latgauss.potential import PosteriorProblem


def tanh_constants(alpha=0.5):
    # z + a tanh(z) per coordinate: G' in [1, 1+a]; |G''| <= a 4/(3 sqrt 3);
    # |G'''| <= 2a (attained at 0). 0.77 rounds the G'' bound up.
    return MapConstants(m=1.0, M=1.0 + alpha, M2=0.77 * alpha, M3=2.0 * alpha)


TANH_CONSTANTS = tanh_constants(0.5)


def identity_problem(d=1, beta=0.1, x=None, epsilon=0.1):
    if x is None:
        x = np.full(d, 0.9)
    model = LatentGaussian(identity_net(d), beta)
    return PosteriorProblem(
        model, np.asarray(x, dtype=float), MapConstants(1, 1, 0, 0), epsilon=epsilon
    )


def scale_problem(a=2.0, d=1, beta=0.25, x=None, epsilon=0.1):
    if x is None:
        x = np.full(d, 1.0)
    model = LatentGaussian(scale_net(d, a), beta)
    return PosteriorProblem(
        model, np.asarray(x, dtype=float), MapConstants(a, a, 0, 0), epsilon=epsilon
    )


def tanh_problem(d=1, beta=0.1, x=None, epsilon=0.1, alpha=0.5):
    if x is None:
        x = np.full(d, 0.9)
    model = LatentGaussian(tanh_residual_net(d, alpha), beta)
    return PosteriorProblem(
        model, np.asarray(x, dtype=float), tanh_constants(alpha), epsilon=epsilon
    )
