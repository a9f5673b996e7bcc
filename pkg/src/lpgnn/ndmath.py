"""Dense numerical core: MLPs with exact reverse-mode gradients, Adam, and a
central-difference gradient checker.

Everything runs in float64.  Weight matrices are stored ``(fan_in, fan_out)``
so a batch of row vectors goes through ``x @ W + b``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError, StructuralError

ACTIVATIONS = ("tanh", "relu", "sigmoid", "identity", "softmax")


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if name == "identity":
        return z
    if name == "softmax":
        return softmax(z)
    raise StructuralError(f"unknown activation {name!r}")


def _activation_vjp(name: str, z: np.ndarray, a: np.ndarray, cot: np.ndarray) -> np.ndarray:
    # cotangent on the pre-activation z given the cotangent on a = act(z)
    if name == "tanh":
        return cot * (1.0 - a * a)
    if name == "relu":
        return cot * (z > 0)
    if name == "sigmoid":
        return cot * a * (1.0 - a)
    if name == "identity":
        return cot
    if name == "softmax":
        return a * (cot - (cot * a).sum(axis=-1, keepdims=True))
    raise StructuralError(f"unknown activation {name!r}")


@dataclass
class GradientTape:
    """Gradients of ``cotangent . output`` w.r.t. weights, biases and input."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray

    def as_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}W{i}"] = w
            out[f"{prefix}b{i}"] = b
        return out


@dataclass(eq=False)
class Mlp:
    """Feed-forward network; ``activations[i]`` follows affine layer ``i``."""

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        n_layers = len(self.layer_sizes) - 1
        if n_layers < 1:
            raise StructuralError("an Mlp needs at least input and output sizes")
        if not (len(self.weights) == len(self.biases) == len(self.activations) == n_layers):
            raise StructuralError("weights/biases/activations must have one entry per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise StructuralError(f"layer {i}: weight {w.shape} / bias {b.shape} "
                                      f"inconsistent with sizes {shape}")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise StructuralError(f"unknown activation {a!r}")
        if "softmax" in self.activations[:-1]:
            raise StructuralError("softmax is only allowed on the output layer")

    @classmethod
    def init(cls, layer_sizes: Sequence[int], rng: np.random.Generator,
             hidden: str = "tanh", output: str = "identity") -> "Mlp":
        """Glorot-uniform weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out)) if fan_in + fan_out else 0.0
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        acts = [hidden] * (len(layer_sizes) - 2) + [output]
        return cls(list(layer_sizes), weights, biases, acts)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}W{i}"] = w
            out[f"{prefix}b{i}"] = b
        return out

    def copy(self) -> "Mlp":
        return Mlp(list(self.layer_sizes), [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases], list(self.activations))

    def forward(self, x: np.ndarray):
        """Forward pass on a batch ``(rows, in)``; returns output and cache."""
        if x.shape[-1] != self.input_dim:
            raise StructuralError(f"Mlp expects input width {self.input_dim}, got {x.shape[-1]}")
        zs, acts = [], [x]
        a = x
        for w, b, name in zip(self.weights, self.biases, self.activations):
            z = a @ w + b
            a = _activate(name, z)
            zs.append(z)
            acts.append(a)
        return a, (zs, acts)

    def backward(self, cache, cotangent: np.ndarray) -> GradientTape:
        zs, acts = cache
        if cotangent.shape != acts[-1].shape:
            raise StructuralError(f"cotangent shape {cotangent.shape} does not match "
                                  f"output shape {acts[-1].shape}")
        dws, dbs = [None] * len(self.weights), [None] * len(self.weights)
        g = cotangent
        for i in reversed(range(len(self.weights))):
            g = _activation_vjp(self.activations[i], zs[i], acts[i + 1], g)
            if g.ndim == 1:
                dws[i] = np.outer(acts[i], g)
                dbs[i] = g.copy()
            else:
                dws[i] = acts[i].T @ g
                dbs[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return GradientTape(dws, dbs, g)


def mlp_forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_dim:
        raise StructuralError(f"input must be a vector of length {net.input_dim}")
    return net.forward(x)[0]


def mlp_backward(net: Mlp, x: np.ndarray, cotangent: np.ndarray) -> GradientTape:
    x = np.asarray(x, dtype=np.float64)
    cotangent = np.asarray(cotangent, dtype=np.float64)
    if cotangent.shape != (net.output_dim,):
        raise StructuralError(f"cotangent must be a vector of length {net.output_dim}")
    _, cache = net.forward(x)
    return net.backward(cache, cotangent)


class Adam:
    """Adam with bias correction over a dict of named arrays (updated in place).

    ``ascend=True`` flips the gradient sign, turning the step into ascent.
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             ascend: bool = False) -> dict[str, np.ndarray]:
        for key, g in grads.items():
            if g.shape != params[key].shape:
                raise StructuralError(f"gradient shape {g.shape} != parameter shape "
                                      f"{params[key].shape}", )
            if not np.all(np.isfinite(g)):
                raise NumericalError("non-finite gradient component", path=key)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for key, p in params.items():
            g = -grads[key] if ascend else grads[key]
            if key not in self.m:
                self.m[key] = np.zeros_like(p)
                self.v[key] = np.zeros_like(p)
            m, v = self.m[key], self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
        return params

    def state_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "t": self.t, "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}

    def load_state_dict(self, state: dict) -> None:
        self.lr, self.beta1, self.beta2 = state["lr"], state["beta1"], state["beta2"]
        self.eps, self.t = state["eps"], int(state["t"])
        self.m = {k: np.array(v, dtype=np.float64) for k, v in state["m"].items()}
        self.v = {k: np.array(v, dtype=np.float64) for k, v in state["v"].items()}


AdamState = Adam


def adam_step(state: Adam, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              ascend: bool = False) -> dict[str, np.ndarray]:
    return state.step(params, grads, ascend=ascend)


def finite_diff_check(f: Callable[[np.ndarray], float], point: np.ndarray,
                      analytic_grad: np.ndarray, h: float = 1e-5,
                      floor: float = 1e-3) -> float:
    """Worst componentwise relative error between ``analytic_grad`` and central
    differences of ``f`` at ``point``.

    The denominator is ``max(|analytic|, |numeric|, floor)``; the floor keeps
    round-off on (near-)zero components from reading as a large relative error.
    """
    x = np.array(point, dtype=np.float64)
    flat = x.reshape(-1)
    analytic = np.asarray(analytic_grad, dtype=np.float64).reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        num = (fp - fm) / (2.0 * h)
        err = abs(num - analytic[i]) / max(abs(analytic[i]), abs(num), floor)
        worst = max(worst, err)
    return worst
