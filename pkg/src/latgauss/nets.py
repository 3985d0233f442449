"""Feedforward networks with a small fixed activation set.

A network is a chain of layers (weight matrix, bias vector, activation tags).
Activations come in two groups:

* smooth, differentiable: identity, tanh, square. Only these admit Jacobians.
* evaluation-only: sign, and the pairwise reducers min2/max2 that map
  consecutive entry pairs to their min/max (halving the layer width).

Elementwise activations may be assigned per neuron within one layer; this is
what lets one layer carry a value unchanged while its neighbours squash
theirs, and residual maps like z + a*tanh(z) depend on it. The pairwise
reducers always apply to a whole layer.

Evaluation is pure: no randomness, float64 throughout, and identical inputs
produce bitwise identical outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InvertibilityError, UnsupportedDifferentiation

SMOOTH_ACTIVATIONS = ("identity", "tanh", "square")
ELEMENTWISE_ACTIVATIONS = ("identity", "tanh", "square", "sign")
PAIRWISE_ACTIVATIONS = ("min2", "max2")
ACTIVATIONS = ELEMENTWISE_ACTIVATIONS + PAIRWISE_ACTIVATIONS

_CODE = {name: i for i, name in enumerate(ELEMENTWISE_ACTIVATIONS)}
_ID, _TANH, _SQ, _SIGN = (_CODE[n] for n in ELEMENTWISE_ACTIVATIONS)

FORMAT_TAG = "latgauss-network-v1"


def _normalize_activation(act, rows: int):
    """Return ('pairwise', tag) or ('elementwise', codes int8 array)."""
    if isinstance(act, str):
        if act in PAIRWISE_ACTIVATIONS:
            if rows % 2 != 0:
                raise DimensionError(f"{act} layer needs an even width, got {rows}")
            return "pairwise", act
        if act not in ELEMENTWISE_ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}")
        return "elementwise", np.full(rows, _CODE[act], dtype=np.int8)
    tags = list(act)
    if len(tags) != rows:
        raise DimensionError(f"{len(tags)} activation tags for {rows} neurons")
    for t in tags:
        if t in PAIRWISE_ACTIVATIONS:
            raise ValueError("pairwise activations cannot be mixed per neuron")
        if t not in ELEMENTWISE_ACTIVATIONS:
            raise ValueError(f"unknown activation {t!r}")
    return "elementwise", np.array([_CODE[t] for t in tags], dtype=np.int8)


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: object  # str, or sequence of per-neuron tags

    # normalized fields, filled in __post_init__
    kind: str = field(init=False)
    codes: object = field(init=False, default=None)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise DimensionError("weight must be 2-d and bias 1-d")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise DimensionError("bias length must match weight rows")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("non-finite layer parameters")
        self.kind, payload = _normalize_activation(self.activation, self.weight.shape[0])
        if self.kind == "elementwise":
            self.codes = payload
        else:
            self.activation = payload

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def rows(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.rows // 2 if self.kind == "pairwise" else self.rows

    def is_smooth(self) -> bool:
        return self.kind == "elementwise" and not np.any(self.codes == _SIGN)

    def activation_tags(self):
        if self.kind == "pairwise":
            return self.activation
        tags = [ELEMENTWISE_ACTIVATIONS[c] for c in self.codes]
        return tags[0] if len(set(tags)) == 1 else tags


def _apply_elementwise(u: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Activation applied along the last axis of u."""
    first = codes[0]
    if np.all(codes == first):
        if first == _ID:
            return u
        if first == _TANH:
            return np.tanh(u)
        if first == _SQ:
            return u * u
        return np.where(u >= 0.0, 1.0, -1.0)  # sign, with sign(0) = +1
    out = u.copy()
    for code in np.unique(codes):
        mask = codes == code
        if code == _TANH:
            out[..., mask] = np.tanh(u[..., mask])
        elif code == _SQ:
            out[..., mask] = u[..., mask] ** 2
        elif code == _SIGN:
            out[..., mask] = np.where(u[..., mask] >= 0.0, 1.0, -1.0)
    return out


def _elementwise_derivative(u: np.ndarray, a: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """sigma'(u) along the last axis; `a` is sigma(u) from the forward pass."""
    first = codes[0]
    if np.all(codes == first):
        if first == _ID:
            return np.ones_like(u)
        if first == _TANH:
            return 1.0 - a * a
        if first == _SQ:
            return 2.0 * u
        raise UnsupportedDifferentiation("sign is not differentiable")
    if np.any(codes == _SIGN):
        raise UnsupportedDifferentiation("sign is not differentiable")
    out = np.ones_like(u)
    tanh_mask = codes == _TANH
    sq_mask = codes == _SQ
    if np.any(tanh_mask):
        out[..., tanh_mask] = 1.0 - a[..., tanh_mask] ** 2
    if np.any(sq_mask):
        out[..., sq_mask] = 2.0 * u[..., sq_mask]
    return out


class Network:
    """Feedforward network; layers chain so layer k's out_dim is k+1's in_dim."""

    def __init__(self, layers: list, input_dim: int):
        if not layers:
            raise DimensionError("a network needs at least one layer")
        self.layers = [l if isinstance(l, Layer) else Layer(*l) for l in layers]
        self.input_dim = int(input_dim)
        prev = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.in_dim != prev:
                raise DimensionError(
                    f"layer {i} expects input dim {layer.in_dim}, previous produces {prev}"
                )
            prev = layer.out_dim
        self.output_dim = prev

    # -- structure ---------------------------------------------------------

    @property
    def depth(self) -> int:
        return len(self.layers)

    def size(self) -> int:
        """Structural parameter count: nonzero weights plus nonzero biases.

        Zeros produced by block assembly are absent connections, not parameters.
        """
        return int(
            sum(np.count_nonzero(l.weight) + np.count_nonzero(l.bias) for l in self.layers)
        )

    @property
    def smooth(self) -> bool:
        return all(l.is_smooth() for l in self.layers)

    # -- evaluation ----------------------------------------------------------

    def eval(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.input_dim,):
            raise DimensionError(f"expected input of shape ({self.input_dim},), got {z.shape}")
        return self.eval_batch(z[None, :])[0]

    def eval_batch(self, Z: np.ndarray) -> np.ndarray:
        """Evaluate on a batch, shape (n, input_dim) -> (n, output_dim)."""
        state = np.asarray(Z, dtype=np.float64)
        if state.ndim != 2 or state.shape[1] != self.input_dim:
            raise DimensionError(f"expected batch of shape (n, {self.input_dim})")
        for layer in self.layers:
            u = state @ layer.weight.T + layer.bias
            if layer.kind == "pairwise":
                pairs = u.reshape(u.shape[0], -1, 2)
                state = pairs.min(axis=2) if layer.activation == "min2" else pairs.max(axis=2)
            else:
                state = _apply_elementwise(u, layer.codes)
        return state

    def _forward_tape(self, Z: np.ndarray):
        """Forward pass storing (preactivation, activation) per layer."""
        if not self.smooth:
            raise UnsupportedDifferentiation(
                "network contains sign/min2/max2 activations"
            )
        state = np.asarray(Z, dtype=np.float64)
        tape = []
        for layer in self.layers:
            u = state @ layer.weight.T + layer.bias
            state = _apply_elementwise(u, layer.codes)
            tape.append((u, state))
        return state, tape

    # -- differentiation -----------------------------------------------------

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        """Exact reverse-mode Jacobian, shape (output_dim, input_dim)."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.input_dim,):
            raise DimensionError(f"expected input of shape ({self.input_dim},)")
        return self.jacobian_batch(z[None, :])[0]

    def jacobian_batch(self, Z: np.ndarray) -> np.ndarray:
        """Jacobians for a batch, shape (n, output_dim, input_dim)."""
        _, tape = self._forward_tape(Z)
        n = len(Z)
        delta = np.broadcast_to(
            np.eye(self.output_dim), (n, self.output_dim, self.output_dim)
        ).copy()
        for layer, (u, a) in zip(reversed(self.layers), reversed(tape)):
            sigma = _elementwise_derivative(u, a, layer.codes)
            delta = (delta * sigma[:, None, :]) @ layer.weight
        return delta

    def vjp_batch(self, Z: np.ndarray, R: np.ndarray):
        """(value, J^T r) per batch row without forming the Jacobian.

        R has shape (n, output_dim); the returned pullback has shape
        (n, input_dim). This is the workhorse of batched potential gradients.
        """
        value, tape = self._forward_tape(Z)
        delta = np.asarray(R, dtype=np.float64)
        for layer, (u, a) in zip(reversed(self.layers), reversed(tape)):
            sigma = _elementwise_derivative(u, a, layer.codes)
            delta = (delta * sigma) @ layer.weight
        return value, delta

    # -- serialization ---------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "format": FORMAT_TAG,
            "input_dim": self.input_dim,
            "layers": [
                {
                    "weight": layer.weight.tolist(),
                    "bias": layer.bias.tolist(),
                    "activation": layer.activation_tags(),
                }
                for layer in self.layers
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Network":
        doc = json.loads(text)
        if doc.get("format") != FORMAT_TAG:
            raise ValueError(f"unrecognized network format {doc.get('format')!r}")
        layers = [
            Layer(np.array(spec["weight"]), np.array(spec["bias"]), spec["activation"])
            for spec in doc["layers"]
        ]
        return cls(layers, doc["input_dim"])


# -- constructors -------------------------------------------------------------


def linear_net(A: np.ndarray, b: np.ndarray | None = None) -> Network:
    A = np.asarray(A, dtype=np.float64)
    if b is None:
        b = np.zeros(A.shape[0])
    return Network([Layer(A, b, "identity")], A.shape[1])


def identity_net(d: int) -> Network:
    return linear_net(np.eye(d))


def scale_net(d: int, a: float) -> Network:
    return linear_net(a * np.eye(d))


def tanh_residual_net(d: int, alpha: float = 0.5) -> Network:
    """G(z) = z + alpha*tanh(z), coordinatewise.

    With 0 < alpha < 1 this is strongly invertible: G' in [1, 1+alpha].
    """
    eye = np.eye(d)
    first = Layer(np.vstack([eye, eye]), np.zeros(2 * d), ["tanh"] * d + ["identity"] * d)
    second = Layer(np.hstack([alpha * eye, eye]), np.zeros(d), "identity")
    return Network([first, second], d)


def _spectral_normalized(A: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(A, compute_uv=False)[0]
    return A / s if s > 0 else A


def random_residual_tanh_net(d: int, seed: int, alpha: float = 0.5, hidden: int | None = None) -> Network:
    """G(z) = z + alpha * A tanh(Bz + c) with ||A||_2 = ||B||_2 = 1.

    The Jacobian is I + alpha * A diag(tanh') B, so singular values stay in
    [1-alpha, 1+alpha]: strongly invertible for alpha < 1.
    """
    h = hidden or d + 2
    rng = _builder_stream(seed)
    B = _spectral_normalized(rng(h, d))
    A = _spectral_normalized(rng(d, h))
    c = 0.3 * rng(h, 1)[:, 0]
    eye = np.eye(d)
    first = Layer(
        np.vstack([B, eye]), np.concatenate([c, np.zeros(d)]), ["tanh"] * h + ["identity"] * d
    )
    second = Layer(np.hstack([alpha * A, eye]), np.zeros(d), "identity")
    return Network([first, second], d)


def random_smooth_net(d: int, seed: int, hidden: int | None = None, out_dim: int | None = None) -> Network:
    """Small random tanh/square MLP for differentiation tests. Not invertible."""
    h = hidden or d + 3
    q = out_dim or d
    rng = _builder_stream(seed)
    W1 = rng(h, d) / np.sqrt(d)
    b1 = 0.2 * rng(h, 1)[:, 0]
    tags = ["tanh"] * (h - h // 3) + ["square"] * (h // 3)
    W2 = rng(q, h) / np.sqrt(h)
    b2 = 0.1 * rng(q, 1)[:, 0]
    return Network([Layer(W1, b1, tags), Layer(W2, b2, "identity")], d)


def _builder_stream(seed: int):
    """Deterministic gaussian matrix factory (counter-based, see rng module)."""
    from .rng import NoiseStream

    stream = NoiseStream(seed)
    counter = [0]

    def draw(rows: int, cols: int) -> np.ndarray:
        counter[0] += 1
        return stream.normal_matrix(0, np.arange(rows, dtype=np.uint64) + counter[0] * 1000, cols)

    return draw


def as_linear(net: Network):
    """(A, b) if the network is purely linear (all identity activations), else None."""
    A = np.eye(net.input_dim)
    b = np.zeros(net.input_dim)
    for layer in net.layers:
        if layer.kind != "elementwise" or np.any(layer.codes != _ID):
            return None
        b = layer.weight @ b + layer.bias
        A = layer.weight @ A
    return A, b


# -- derivative tensors (finite differences of the exact Jacobian) ------------


def second_derivative_tensor(net: Network, z: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """T[i, j, k] = d^2 G_i / dz_j dz_k via central differences of the Jacobian."""
    z = np.asarray(z, dtype=np.float64)
    d = net.input_dim
    T = np.empty((net.output_dim, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        T[:, :, k] = (net.jacobian(z + e) - net.jacobian(z - e)) / (2.0 * step)
    return 0.5 * (T + T.transpose(0, 2, 1))


def third_derivative_tensor(net: Network, z: np.ndarray, step: float = 1e-3) -> np.ndarray:
    """T[i, j, k, l] = d^3 G_i / dz_j dz_k dz_l via second differences of the Jacobian."""
    z = np.asarray(z, dtype=np.float64)
    d = net.input_dim
    J0 = net.jacobian(z)
    T = np.empty((net.output_dim, d, d, d))
    for k in range(d):
        ek = np.zeros(d)
        ek[k] = step
        for l in range(k, d):
            el = np.zeros(d)
            el[l] = step
            if k == l:
                block = (net.jacobian(z + ek) - 2.0 * J0 + net.jacobian(z - ek)) / step**2
            else:
                block = (
                    net.jacobian(z + ek + el)
                    - net.jacobian(z + ek - el)
                    - net.jacobian(z - ek + el)
                    + net.jacobian(z - ek - el)
                ) / (4.0 * step**2)
            T[:, :, k, l] = block
            T[:, :, l, k] = block
    return T


def tensor_opnorm(T: np.ndarray, seed: int = 0, restarts: int = 4, iters: int = 40) -> float:
    """sup over unit vectors of |T[u1, ..., up]| by alternating maximization."""
    from .rng import NoiseStream

    T = np.asarray(T, dtype=np.float64)
    if not np.any(T):
        return 0.0
    stream = NoiseStream(seed)
    order = T.ndim
    letters = "abcdefgh"[:order]
    best = 0.0
    for r in range(restarts):
        vecs = []
        for axis in range(order):
            g = stream.normal(0, r * order + axis, T.shape[axis])
            vecs.append(g / np.linalg.norm(g))
        for _ in range(iters):
            for axis in range(order):
                sub = (
                    letters
                    + ","
                    + ",".join(l for i, l in enumerate(letters) if i != axis)
                    + "->"
                    + letters[axis]
                )
                contracted = np.einsum(sub, T, *[v for i, v in enumerate(vecs) if i != axis])
                norm = np.linalg.norm(contracted)
                if norm == 0.0:
                    break
                vecs[axis] = contracted / norm
        value = abs(np.einsum(letters + "," + ",".join(letters) + "->", T, *vecs))
        best = max(best, value)
    return float(best)


# -- Lipschitz / smoothness constants -----------------------------------------


@dataclass
class MapConstants:
    """Bounds on a generator: m, M bracket pairwise stretch, M2/M3 bound the
    operator norms of the second and third derivative tensors."""

    m: float
    M: float
    M2: float
    M3: float
    estimated: bool = True
    non_invertible: bool = False

    def __post_init__(self):
        if not (0.0 <= self.m <= self.M):
            raise InvertibilityError(
                f"need 0 <= m <= M, got m={self.m}, M={self.M}", m=self.m, M=self.M
            )
        for name in ("M2", "M3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def as_dict(self) -> dict:
        return {
            "m": self.m,
            "M": self.M,
            "M2": self.M2,
            "M3": self.M3,
            "estimated": self.estimated,
            "non_invertible": self.non_invertible,
        }


def estimate_constants(
    net: Network,
    sample_count: int = 400,
    radius: float = 3.0,
    seed: int = 0,
    tensor_points: int = 24,
) -> MapConstants:
    """Sampled constants: pairwise stretch ratios for m/M, finite-difference
    derivative tensors (alternating power iteration) for M2/M3.

    Sampled with a counter-based stream, so for a fixed seed the first k
    samples are a prefix of the first k+1: the m estimate never increases and
    the M estimate never decreases as sample_count grows. These are inner
    estimates of the true bounds (never larger than the true sup for M and
    never smaller than the true inf for m); supply exact constants instead
    when they are known.
    """
    from .rng import NoiseStream, ball_point

    if not net.smooth:
        raise UnsupportedDifferentiation("constants are defined for smooth generators")
    stream = NoiseStream(seed)
    d = net.input_dim
    points = np.empty((sample_count, d))
    partners = np.empty((sample_count, d))
    for i in range(sample_count):
        z1 = ball_point(stream, stage=0, draw=2 * i, dim=d, radius=radius)
        if i % 2 == 0:
            z2 = ball_point(stream, stage=0, draw=2 * i + 1, dim=d, radius=radius)
        else:
            # nearby partner probes the local slope
            offset = ball_point(stream, stage=0, draw=2 * i + 1, dim=d, radius=1.0)
            z2 = z1 + 1e-3 * max(radius, 1e-6) * offset
        points[i] = z1
        partners[i] = z2
    gap_in = np.linalg.norm(points - partners, axis=1)
    gap_out = np.linalg.norm(net.eval_batch(points) - net.eval_batch(partners), axis=1)
    keep = gap_in > 0
    ratios = gap_out[keep] / gap_in[keep]
    m_hat = float(ratios.min())
    M_hat = float(ratios.max())

    M2_hat = 0.0
    M3_hat = 0.0
    for i in range(min(tensor_points, sample_count)):
        z = points[i]
        T2 = second_derivative_tensor(net, z)
        M2_hat = max(M2_hat, tensor_opnorm(T2, seed=seed + 1))
        T3 = third_derivative_tensor(net, z)
        M3_hat = max(M3_hat, tensor_opnorm(T3, seed=seed + 2))

    return MapConstants(
        m=m_hat,
        M=M_hat,
        M2=M2_hat,
        M3=M3_hat,
        estimated=True,
        non_invertible=bool(m_hat < 1e-6 * max(M_hat, 1.0)),
    )
