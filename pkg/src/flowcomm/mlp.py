"""Dense feedforward networks with exact reverse-mode gradients and Adam."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity", "softmax")
_ACT_CODE = {name: k for k, name in enumerate(ACTIVATIONS)}
MLP_MAGIC = b"FCN1"


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "identity":
        return z
    if name == "softmax":
        e = np.exp(z - z.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)
    raise ValueError(f"unknown activation {name!r}")


def _activation_backward(name: str, z: np.ndarray, y: np.ndarray, g: np.ndarray) -> np.ndarray:
    if name == "relu":
        return g * (z > 0)
    if name == "tanh":
        return g * (1.0 - y * y)
    if name == "identity":
        return g
    if name == "softmax":
        return y * (g - np.sum(g * y, axis=-1, keepdims=True))
    raise ValueError(f"unknown activation {name!r}")


class Mlp:
    """Affine + activation stack. Layer l maps dims[l] -> dims[l+1]."""

    def __init__(self, dims, activations, seed: int = 0):
        if len(activations) != len(dims) - 1:
            raise ValueError("need one activation per layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        rng = np.random.default_rng(seed)
        self.dims = tuple(int(d) for d in dims)
        self.activations = tuple(activations)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))
        self._cache = None

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    def forward(self, x: np.ndarray, record: bool = False) -> np.ndarray:
        """Evaluate the network; x is (in_dim,) or (batch, in_dim)."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        a = x.reshape(1, -1) if squeeze else x
        if a.shape[1] != self.in_dim:
            raise ValueError(f"input dim {a.shape[1]} != expected {self.in_dim}")
        inputs, zs, outs = [a], [], []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = a @ w.T + b
            a = _apply_activation(act, z)
            zs.append(z)
            outs.append(a)
            inputs.append(a)
        if record:
            self._cache = (inputs[:-1], zs, outs, squeeze)
        return a[0] if squeeze else a

    def backward(self, upstream: np.ndarray):
        """Gradients from the last recorded forward pass.

        Returns ([(dW, db) per layer], input gradient). Parameter gradients
        are summed over the batch; the input gradient keeps the batch shape.
        """
        if self._cache is None:
            raise RuntimeError("no recorded forward pass; call forward(record=True) first")
        inputs, zs, outs, squeeze = self._cache
        g = np.asarray(upstream, dtype=np.float64)
        if squeeze:
            g = g.reshape(1, -1)
        if g.shape != outs[-1].shape:
            raise ValueError(f"upstream shape {g.shape} != output shape {outs[-1].shape}")
        grads = [None] * len(self.weights)
        for l in range(len(self.weights) - 1, -1, -1):
            gz = _activation_backward(self.activations[l], zs[l], outs[l], g)
            grads[l] = (gz.T @ inputs[l], gz.sum(axis=0))
            g = gz @ self.weights[l]
        return grads, (g[0] if squeeze else g)

    def copy(self) -> "Mlp":
        dup = Mlp.__new__(Mlp)
        dup.dims = self.dims
        dup.activations = self.activations
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        dup._cache = None
        return dup


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_net(cls, net: Mlp, lr: float) -> "AdamState":
        m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
        v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
        return cls(lr=lr, m=m, v=v)


def adam_step(net: Mlp, grads, state: AdamState) -> None:
    """One Adam update of net parameters from per-layer (dW, db) gradients."""
    if len(grads) != len(net.weights):
        raise ValueError("gradient list does not match layer count")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for l, (dw, db) in enumerate(grads):
        if dw.shape != net.weights[l].shape or db.shape != net.biases[l].shape:
            raise ValueError(f"gradient shape mismatch at layer {l}")
        for param, grad, mom, sec in (
            (net.weights[l], dw, state.m[l][0], state.v[l][0]),
            (net.biases[l], db, state.m[l][1], state.v[l][1]),
        ):
            mom *= state.beta1
            mom += (1.0 - state.beta1) * grad
            sec *= state.beta2
            sec += (1.0 - state.beta2) * grad * grad
            param -= state.lr * (mom / bc1) / (np.sqrt(sec / bc2) + state.eps)


def save_mlp(net: Mlp, path) -> None:
    """Snapshot: magic, layer dims + activation codes, float64 LE parameters."""
    with open(path, "wb") as fh:
        fh.write(MLP_MAGIC)
        fh.write(struct.pack("<I", len(net.dims)))
        fh.write(struct.pack(f"<{len(net.dims)}I", *net.dims))
        fh.write(bytes(_ACT_CODE[a] for a in net.activations))
        for w, b in zip(net.weights, net.biases):
            fh.write(w.astype("<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())


def load_mlp(path) -> Mlp:
    with open(path, "rb") as fh:
        if fh.read(4) != MLP_MAGIC:
            raise ValueError("not an mlp snapshot")
        (n_dims,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims))
        acts = [ACTIVATIONS[c] for c in fh.read(n_dims - 1)]
        net = Mlp(dims, acts, seed=0)
        for l, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            net.weights[l] = np.frombuffer(
                fh.read(8 * fan_out * fan_in), dtype="<f8"
            ).reshape(fan_out, fan_in).copy()
            net.biases[l] = np.frombuffer(fh.read(8 * fan_out), dtype="<f8").copy()
    return net
