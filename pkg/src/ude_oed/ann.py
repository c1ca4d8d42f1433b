"""Feed-forward networks with exact Jacobians w.r.t. inputs and weights.

Weights and biases of layer j are stored contiguously as
``vec(W_j row-major, b_j)``; the full parameter vector is the
concatenation over layers.  Networks here are tiny (tens of neurons), so
everything is computed exactly with dense numpy operations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError

__all__ = [
    "AnnArchitecture",
    "param_count",
    "layer_slices",
    "init_weights",
    "forward",
    "jacobians",
    "value_and_jacobians",
    "batch_forward",
    "mse_and_grad",
    "save_weights",
    "load_weights",
]

_ACTIVATIONS = ("tanh", "softplus", "identity")


def _softplus(z: np.ndarray) -> np.ndarray:
    # overflow-safe: max(z, 0) + log1p(exp(-|z|))
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _act(tag: str, z: np.ndarray) -> np.ndarray:
    if tag == "tanh":
        return np.tanh(z)
    if tag == "softplus":
        return _softplus(z)
    return z


def _act_deriv(tag: str, z: np.ndarray) -> np.ndarray:
    if tag == "tanh":
        th = np.tanh(z)
        return 1.0 - th * th
    if tag == "softplus":
        return _sigmoid(z)
    return np.ones_like(z)


@dataclass(frozen=True)
class AnnArchitecture:
    """Layer dimensions d_0..d_J and one activation tag per layer."""

    layer_dims: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        acts = tuple(self.activations)
        if len(dims) < 2:
            raise ConfigError("architecture needs at least one layer")
        if any(d < 1 for d in dims):
            raise ConfigError("all layer dimensions must be >= 1")
        if len(acts) != len(dims) - 1:
            raise ConfigError("need exactly one activation per layer")
        for tag in acts:
            if tag not in _ACTIVATIONS:
                raise ConfigError(f"unknown activation {tag!r}")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "activations", acts)

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]


def param_count(arch: AnnArchitecture) -> int:
    """Total number of weights and biases: sum_j d_j * (d_{j-1} + 1)."""
    dims = arch.layer_dims
    return sum(dims[j + 1] * (dims[j] + 1) for j in range(arch.n_layers))


def layer_slices(arch: AnnArchitecture) -> list[slice]:
    """Disjoint slices of the flat parameter vector, one per layer."""
    dims = arch.layer_dims
    slices = []
    offset = 0
    for j in range(arch.n_layers):
        size = dims[j + 1] * (dims[j] + 1)
        slices.append(slice(offset, offset + size))
        offset += size
    return slices


def _unpack(arch: AnnArchitecture, theta: np.ndarray):
    dims = arch.layer_dims
    layers = []
    offset = 0
    for j in range(arch.n_layers):
        d_out, d_in = dims[j + 1], dims[j]
        w = theta[offset : offset + d_out * d_in].reshape(d_out, d_in)
        offset += d_out * d_in
        b = theta[offset : offset + d_out]
        offset += d_out
        layers.append((w, b))
    if offset != theta.size:
        raise InputError(
            f"weight vector has {theta.size} entries, architecture needs {offset}"
        )
    return layers


def init_weights(arch: AnnArchitecture, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    dims = arch.layer_dims
    parts = []
    for j in range(arch.n_layers):
        d_out, d_in = dims[j + 1], dims[j]
        limit = np.sqrt(6.0 / (d_in + d_out))
        parts.append(rng.uniform(-limit, limit, size=d_out * d_in))
        parts.append(np.zeros(d_out))
    return np.concatenate(parts)


def forward(arch: AnnArchitecture, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the network at a single input vector."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != arch.input_dim:
        raise InputError(f"input has dim {x.size}, expected {arch.input_dim}")
    a = x
    for (w, b), tag in zip(_unpack(arch, np.asarray(theta, dtype=float)), arch.activations):
        a = _act(tag, w @ a + b)
    return a


def value_and_jacobians(
    arch: AnnArchitecture, theta: np.ndarray, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Output, dU/dx (d_J x d_0), and dU/dtheta (d_J x n_theta) in one pass.

    One forward pass caches pre-activations, then a reverse sweep
    accumulates both Jacobians layer by layer.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size != arch.input_dim:
        raise InputError(f"input has dim {x.size}, expected {arch.input_dim}")
    theta = np.asarray(theta, dtype=float)
    layers = _unpack(arch, theta)
    inputs = [x]
    pre = []
    a = x
    for (w, b), tag in zip(layers, arch.activations):
        z = w @ a + b
        pre.append(z)
        a = _act(tag, z)
        inputs.append(a)

    d_out = arch.output_dim
    d_theta = np.empty((d_out, theta.size))
    slices = layer_slices(arch)
    m = np.eye(d_out)
    for j in range(arch.n_layers - 1, -1, -1):
        w, _ = layers[j]
        mz = m * _act_deriv(arch.activations[j], pre[j])[np.newaxis, :]
        n_w = w.size
        # d_out x (d_j*d_in): dU/dW_j[r, c] = mz[:, r] * input[c]
        dw = mz[:, :, np.newaxis] * inputs[j][np.newaxis, np.newaxis, :]
        d_theta[:, slices[j]] = np.concatenate(
            [dw.reshape(d_out, n_w), mz], axis=1
        )
        m = mz @ w
    return inputs[-1], m, d_theta


def jacobians(
    arch: AnnArchitecture, theta: np.ndarray, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Exact dU/dx and dU/dtheta at (x, theta)."""
    _, du_dx, du_dtheta = value_and_jacobians(arch, theta, x)
    return du_dx, du_dtheta


def batch_forward(arch: AnnArchitecture, theta: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Evaluate the network at rows of xs, returning (n, d_J)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    a = xs.T
    for (w, b), tag in zip(_unpack(arch, np.asarray(theta, dtype=float)), arch.activations):
        a = _act(tag, w @ a + b[:, np.newaxis])
    return a.T


def mse_and_grad(
    arch: AnnArchitecture, theta: np.ndarray, xs: np.ndarray, ys: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean squared error over a batch and its gradient w.r.t. theta.

    Classic batched backpropagation; used by the regression pre-training
    that produces initial weight guesses.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.asarray(ys, dtype=float).reshape(xs.shape[0], arch.output_dim)
    theta = np.asarray(theta, dtype=float)
    layers = _unpack(arch, theta)
    acts = [xs.T]
    pre = []
    a = xs.T
    for (w, b), tag in zip(layers, arch.activations):
        z = w @ a + b[:, np.newaxis]
        pre.append(z)
        a = _act(tag, z)
        acts.append(a)
    n = xs.shape[0]
    resid = a - ys.T
    loss = float(np.mean(resid**2))
    grad = np.empty_like(theta)
    slices = layer_slices(arch)
    # dMSE/doutput, then walk the layers backwards
    delta = (2.0 / resid.size) * resid
    for j in range(arch.n_layers - 1, -1, -1):
        w, _ = layers[j]
        delta = delta * _act_deriv(arch.activations[j], pre[j])
        gw = delta @ acts[j].T
        gb = delta.sum(axis=1)
        grad[slices[j]] = np.concatenate([gw.ravel(), gb])
        delta = w.T @ delta
    return loss, grad


# ---------------------------------------------------------------------------
# Weight serialization: flat array with an architecture header, exact
# round-trip via shortest-repr floats.
# ---------------------------------------------------------------------------


def save_weights(path, arch: AnnArchitecture, theta: np.ndarray) -> None:
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != param_count(arch):
        raise InputError("weight vector does not match architecture")
    lines = [
        "dims " + " ".join(str(d) for d in arch.layer_dims),
        "activations " + " ".join(arch.activations),
    ]
    lines.extend(repr(float(v)) for v in theta)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_weights(path) -> tuple[AnnArchitecture, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) < 2 or not lines[0].startswith("dims ") or not lines[1].startswith(
        "activations "
    ):
        raise InputError(f"malformed weight file {path}")
    dims = tuple(int(tok) for tok in lines[0].split()[1:])
    acts = tuple(lines[1].split()[1:])
    arch = AnnArchitecture(dims, acts)
    theta = np.array([float(ln) for ln in lines[2:]])
    if theta.size != param_count(arch):
        raise InputError(f"weight file {path} has wrong parameter count")
    return arch, theta
