"""Unstacked deep operator network with exact reverse-mode gradients.

``G(u)(x) = <branch(u), trunk(x)> + b0`` where both nets are MLPs ending in
a linear layer of width K. All parameters live in one flat float64 vector
ordered as::

    branch W_1, b_1, ..., W_L, b_L, trunk W_1, b_1, ..., W_L, b_L, b0

with every ``W`` of shape ``(fan_in, fan_out)`` stored row-major.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .grid import GridField
from .patches import branch_inputs

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0.0).astype(float)),
}


@dataclass(frozen=True)
class DonArchitecture:
    branch_layers: tuple  # widths including the input width; last entry is K
    trunk_layers: tuple
    activation: str = "tanh"
    output_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "branch_layers", tuple(int(w) for w in self.branch_layers))
        object.__setattr__(self, "trunk_layers", tuple(int(w) for w in self.trunk_layers))
        if len(self.branch_layers) < 2 or len(self.trunk_layers) < 2:
            raise ValueError("each net needs an input width and at least one layer")
        if self.branch_layers[-1] != self.trunk_layers[-1]:
            raise ShapeError(
                f"branch and trunk must end in the same width K, got "
                f"{self.branch_layers[-1]} and {self.trunk_layers[-1]}"
            )
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def default(cls, branch_input_dim, dim, width=64, depth=2, K=64, **kw):
        return cls((branch_input_dim,) + (width,) * depth + (K,), (dim,) + (width,) * depth + (K,), **kw)

    @property
    def K(self):
        return self.branch_layers[-1]

    @property
    def branch_input_dim(self):
        return self.branch_layers[0]

    @property
    def trunk_input_dim(self):
        return self.trunk_layers[0]

    def _layout(self):
        out, start = [], 0
        for net, widths in (("branch", self.branch_layers), ("trunk", self.trunk_layers)):
            for fan_in, fan_out in zip(widths[:-1], widths[1:]):
                out.append((net, start, fan_in, fan_out))
                start += fan_in * fan_out + fan_out
        return out, start

    @property
    def n_params(self):
        return self._layout()[1] + 1


class DonParams:
    """Parameters of a DON, backed by a single flat vector.

    ``branch`` and ``trunk`` are lists of ``(W, b)`` views into that vector.
    """

    __slots__ = ("arch", "vector", "branch", "trunk")

    def __init__(self, arch, vector):
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (arch.n_params,):
            raise ShapeError(f"expected {arch.n_params} parameters, got {vector.shape}")
        self.arch = arch
        self.vector = vector
        self.branch, self.trunk = [], []
        layout, _ = arch._layout()
        for net, start, fi, fo in layout:
            W = vector[start : start + fi * fo].reshape(fi, fo)
            b = vector[start + fi * fo : start + fi * fo + fo]
            (self.branch if net == "branch" else self.trunk).append((W, b))

    @property
    def output_bias(self):
        return self.vector[-1]

    def flatten(self):
        return self.vector.copy()

    @classmethod
    def unflatten(cls, arch, vector):
        return cls(arch, np.array(vector, dtype=float))

    def copy(self):
        return DonParams(self.arch, self.vector.copy())

    def to_csv(self, path):
        save_params(self, path)


def zeros(arch):
    return DonParams(arch, np.zeros(arch.n_params))


def init_params(arch, seed):
    """Glorot-uniform weights, zero biases, zero output bias."""
    rng = np.random.default_rng(seed)
    p = zeros(arch)
    for W, _ in p.branch + p.trunk:
        bound = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
        W[...] = rng.uniform(-bound, bound, size=W.shape)
    return p


def _mlp_forward(layers, x, act):
    """Returns the output and the (pre, post) activation cache."""
    f, _ = _ACTIVATIONS[act]
    cache = [(None, x)]
    h = x
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        h = z if i == len(layers) - 1 else f(z)
        cache.append((z, h))
    return h, cache


def _mlp_backward(layers, cache, grad_out, act, grad_views):
    _, df = _ACTIVATIONS[act]
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        z, h = cache[i + 1]
        if i != len(layers) - 1:
            g = g * df(z, h)
        gW, gb = grad_views[i]
        gW[...] = cache[i][1].T @ g
        gb[...] = g.sum(axis=0)
        if i:
            g = g @ W.T


def _check_inputs(arch, branch_in, x):
    if branch_in.shape[1] != arch.branch_input_dim:
        raise ShapeError(f"branch input width {branch_in.shape[1]}, expected {arch.branch_input_dim}")
    if x.shape[1] != arch.trunk_input_dim:
        raise ShapeError(f"location dimension {x.shape[1]}, expected {arch.trunk_input_dim}")
    if len(branch_in) != len(x):
        raise ShapeError("branch inputs and locations differ in count")


def forward_batch(params, branch_in, x):
    """DON outputs for ``(N, p**d)`` branch inputs and ``(N, d)`` locations."""
    arch = params.arch
    branch_in = np.atleast_2d(np.asarray(branch_in, dtype=float))
    x = np.asarray(x, dtype=float).reshape(len(branch_in), -1)
    _check_inputs(arch, branch_in, x)
    bo, _ = _mlp_forward(params.branch, branch_in, arch.activation)
    to, _ = _mlp_forward(params.trunk, x, arch.activation)
    return np.einsum("nk,nk->n", bo, to) + params.output_bias


def don_forward(params, arch, branch_in, x):
    """Single-point evaluation ``<branch(branch_in), trunk(x)> + b0``."""
    if params.arch != arch:
        raise ShapeError("parameters were built for a different architecture")
    b = np.asarray(branch_in, dtype=float).reshape(1, -1)
    return float(forward_batch(params, b, np.atleast_1d(x).reshape(1, -1))[0])


def residual_and_grad(params, branch_in, x, weights):
    """Value ``sum_i w_i r_i**2`` with ``r = G - label`` folded into ``weights``.

    ``weights`` is a callable ``r -> (value, dvalue/dr)`` so the same backward
    pass serves the MSE loss and the Gaussian log-likelihood.
    """
    arch = params.arch
    bo, bcache = _mlp_forward(params.branch, branch_in, arch.activation)
    to, tcache = _mlp_forward(params.trunk, x, arch.activation)
    out = np.einsum("nk,nk->n", bo, to) + params.output_bias
    value, dout = weights(out)
    grad = zeros(arch)
    _mlp_backward(params.branch, bcache, dout[:, None] * to, arch.activation, grad.branch)
    _mlp_backward(params.trunk, tcache, dout[:, None] * bo, arch.activation, grad.trunk)
    grad.vector[-1] = dout.sum() if arch.output_bias else 0.0
    return value, grad


def don_loss_and_grad(params, arch, dataset):
    """Mean squared error over the dataset and its exact gradient."""
    if params.arch != arch:
        raise ShapeError("parameters were built for a different architecture")
    _check_inputs(arch, dataset.branch, dataset.locations)
    labels = dataset.labels
    n = len(labels)

    def mse(out):
        r = out - labels
        return float(np.dot(r, r) / n), 2.0 * r / n

    return residual_and_grad(params, dataset.branch, dataset.locations, mse)


def predict_points(params, coarse, spec, points, chunk=4096):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        sl = slice(s, s + chunk)
        out[sl] = forward_batch(params, branch_inputs(coarse, pts[sl], spec), pts[sl])
    return out


def predict_field(params, arch, coarse, spec, eval_grid):
    """DON prediction at every node of ``eval_grid``."""
    if params.arch != arch:
        raise ShapeError("parameters were built for a different architecture")
    return GridField(eval_grid, predict_points(params, coarse, spec, eval_grid.points()))


# -- serialization ------------------------------------------------------------

def save_params(params, path):
    """Flat CSV vector plus ``<path>.json`` describing the architecture."""
    path = Path(path)
    path.write_text("\n".join(f"{v:.17g}" for v in params.vector) + "\n")
    Path(str(path) + ".json").write_text(json.dumps(asdict(params.arch), indent=2) + "\n")


def load_params(path):
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    arch = DonArchitecture(**meta)
    vec = np.array([float(v) for v in path.read_text().split()])
    return DonParams(arch, vec)
