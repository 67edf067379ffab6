"""Dense multilayer perceptron with hand-written backprop, built on numpy.

Hidden layers are ReLU, the output layer is linear, everything runs in
float64. Weight matrices are (fan_out, fan_in); forward maps row vectors.
Checkpoints are numpy ``.npz`` archives with a version tag (lossless).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

CHECKPOINT_FORMAT = "fedroute-weights v1"


@dataclass
class ModelWeights:
    """Layer sizes plus one (W, b) pair per layer. Treated as a value."""

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "ModelWeights":
        return ModelWeights(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def flat(self) -> np.ndarray:
        """All parameters as one vector (weights then bias, layer by layer)."""
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(json.dumps(self.layer_sizes).encode())
        for w, b in zip(self.weights, self.biases):
            h.update(np.ascontiguousarray(w).tobytes())
            h.update(np.ascontiguousarray(b).tobytes())
        return h.hexdigest()


@dataclass
class GradientSet:
    """Parameter gradients with the same shapes as the model they came from."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


def _check_arch(layer_sizes) -> tuple[int, ...]:
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise ValueError("need at least input and output layer sizes")
    if any(s < 1 for s in sizes):
        raise ValueError(f"layer sizes must be positive, got {sizes}")
    return sizes


def init_weights(layer_sizes, seed: int) -> ModelWeights:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    sizes = _check_arch(layer_sizes)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelWeights(sizes, weights, biases)


def forward_batch(w: ModelWeights, x: np.ndarray) -> np.ndarray:
    """Outputs for a (batch, fan_in) matrix of inputs."""
    h = x
    last = w.n_layers - 1
    for i, (mat, bias) in enumerate(zip(w.weights, w.biases)):
        h = h @ mat.T + bias
        if i != last:
            np.maximum(h, 0.0, out=h)
    return h


def forward(w: ModelWeights, x) -> np.ndarray:
    """Output vector for a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (w.layer_sizes[0],):
        raise ValueError(f"input shape {x.shape} != ({w.layer_sizes[0]},)")
    return forward_batch(w, x[None, :])[0]


def backward_batch(w: ModelWeights, x: np.ndarray, out_grad: np.ndarray) -> GradientSet:
    """Exact gradients of sum_k <out_grad_k, output_k> over a batch."""
    acts = [x]
    h = x
    last = w.n_layers - 1
    pre = []
    for i, (mat, bias) in enumerate(zip(w.weights, w.biases)):
        z = h @ mat.T + bias
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    g_w = [None] * w.n_layers
    g_b = [None] * w.n_layers
    delta = out_grad
    for i in range(last, -1, -1):
        if i != last:
            delta = delta * (pre[i] > 0.0)
        g_w[i] = delta.T @ acts[i]
        g_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ w.weights[i]
    return GradientSet(g_w, g_b)


def backward(w: ModelWeights, x, out_grad) -> GradientSet:
    """Gradients of <out_grad, forward(w, x)> with respect to every parameter."""
    x = np.asarray(x, dtype=float)
    out_grad = np.asarray(out_grad, dtype=float)
    if out_grad.shape != (w.layer_sizes[-1],):
        raise ValueError(f"out_grad shape {out_grad.shape} != ({w.layer_sizes[-1]},)")
    return backward_batch(w, x[None, :], out_grad[None, :])


def sgd_step(w: ModelWeights, g: GradientSet, lr: float) -> ModelWeights:
    """Plain gradient descent: parameters minus lr times gradient."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    return ModelWeights(
        w.layer_sizes,
        [wi - lr * gi for wi, gi in zip(w.weights, g.weights)],
        [bi - lr * gi for bi, gi in zip(w.biases, g.biases)],
    )


def save_weights(w: ModelWeights, path: str) -> None:
    """Write a versioned, lossless checkpoint (numpy .npz archive)."""
    arrays = {"format": np.array(CHECKPOINT_FORMAT), "arch": np.array(json.dumps(w.layer_sizes))}
    for i, (mat, bias) in enumerate(zip(w.weights, w.biases)):
        arrays[f"w{i}"] = mat
        arrays[f"b{i}"] = bias
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_weights(path: str) -> ModelWeights:
    with np.load(path) as data:
        fmt = str(data["format"])
        if fmt != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {fmt!r}")
        sizes = _check_arch(json.loads(str(data["arch"])))
        weights, biases = [], []
        for i in range(len(sizes) - 1):
            weights.append(data[f"w{i}"].astype(float))
            biases.append(data[f"b{i}"].astype(float))
    w = ModelWeights(sizes, weights, biases)
    for mat, bias, fan_in, fan_out in zip(w.weights, w.biases, sizes, sizes[1:]):
        if mat.shape != (fan_out, fan_in) or bias.shape != (fan_out,):
            raise ValueError("checkpoint arrays do not match the declared architecture")
    return w
