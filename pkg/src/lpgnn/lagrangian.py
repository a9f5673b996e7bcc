"""The layered Lagrangian and its gradients.

    L = sum_{v in S} loss(f_r(x_{v,K-1}), y_v)
        + sum_k sum_{v in V} lambda_{v,k} . G(x_{v,k} - f^k_a,v)

(graph tasks replace the first term by ``loss(f_r(sum_v f^{K-1}_a,v), y_G)``).
Gradients are assembled node-locally: every ``x_{v,k}`` collects its own
constraint term, the terms of the nodes whose neighborhood contains it, the
next layer's terms through the ``l_v`` slot, and the loss at the top layer.
The multiplier gradient is the constraint value itself.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, StructuralError
from .graph import Graph, GraphBatch, Topology
from .model import LpModel
from .ndmath import log_softmax, softmax


@dataclass(frozen=True, eq=False)
class Problem:
    """A graph (or merged batch) plus the supervision the loss needs."""

    topology: Topology
    features: np.ndarray
    sup_index: np.ndarray
    targets: np.ndarray | None
    graph_index: np.ndarray
    n_graphs: int

    @property
    def node_count(self) -> int:
        return self.topology.node_count


def as_problem(model: LpModel, data) -> Problem:
    if isinstance(data, Problem):
        return data
    if isinstance(data, GraphBatch):
        g, graph_index, n_graphs = data.merged, data.graph_index, len(data)
        graph_targets = data.graph_targets
    elif isinstance(data, Graph):
        g, graph_index, n_graphs = data, np.zeros(data.node_count, dtype=np.int64), 1
        graph_targets = None if data.graph_target is None else np.array([data.graph_target])
    else:
        raise TypeError(f"expected Graph or GraphBatch, got {type(data).__name__}")
    if g.feature_dim != model.feature_dim or g.arc_feature_dim != model.arc_dim:
        raise StructuralError(
            f"data has feature dims (m={g.feature_dim}, d={g.arc_feature_dim}) but the "
            f"model expects (m={model.feature_dim}, d={model.arc_dim})")
    if model.task == "node":
        sup = np.flatnonzero(g.supervised)
        targets = None if g.targets is None else g.targets[sup]
    else:
        sup = np.arange(n_graphs)
        targets = graph_targets
    return Problem(g.topology, g.node_features, sup, targets, graph_index, n_graphs)


@dataclass
class Lagrangian:
    value: float
    loss: float
    residuals: list[np.ndarray]
    transitions: list[np.ndarray]
    logits: np.ndarray | None
    params: dict[str, np.ndarray] | None = None
    states: list[np.ndarray] | None = None
    multipliers: list[np.ndarray] | None = None

    @property
    def max_residual(self) -> float:
        return max((float(np.abs(r).max()) for r in self.residuals if r.size), default=0.0)

    @property
    def mean_residual(self) -> float:
        norms = [np.abs(r).max(axis=1) for r in self.residuals if r.size]
        return float(np.concatenate(norms).mean()) if norms else 0.0


def _loss(model: LpModel, logits: np.ndarray, targets: np.ndarray):
    if model.loss == "xent":
        logp = log_softmax(logits)
        rows = np.arange(len(targets))
        loss = -float(logp[rows, targets].sum())
        dlogits = softmax(logits)
        dlogits[rows, targets] -= 1.0
    else:
        diff = logits - targets.reshape(logits.shape)
        loss = float((diff * diff).sum())
        dlogits = 2.0 * diff
    if model.loss_reduction == "mean" and len(targets):
        loss /= len(targets)
        dlogits /= len(targets)
    return loss, dlogits


def _check_finite(arr, what, k):
    if not np.all(np.isfinite(arr)):
        v = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise NumericalError(f"non-finite {what}", path=f"layer {k}, node {v}")


def _forward(model, prob, X, dropout, rng):
    if len(X) != model.depth:
        raise StructuralError(f"expected states for {model.depth} layers, got {len(X)}")
    Fs, caches = [], []
    for k, agg in enumerate(model.layers):
        L = prob.features if k == 0 else X[k - 1]
        F, cache = agg.forward(prob.topology, X[k], L, dropout, rng)
        _check_finite(F, "transition output", k)
        Fs.append(F)
        caches.append(cache)
    return Fs, caches


def _readout_input(model, prob, X, Fs):
    if model.task == "node":
        return X[-1][prob.sup_index]
    pooled = np.zeros((prob.n_graphs, Fs[-1].shape[1]))
    np.add.at(pooled, prob.graph_index, Fs[-1])
    return pooled


def _constraint_terms(model, X, Fs, Lam):
    residuals = [x - f for x, f in zip(X, Fs)]
    total = 0.0
    for k, (r, lam) in enumerate(zip(residuals, Lam)):
        gv = model.constraint.value(r)
        if model.multiplier_mode == "scalar":
            gv = gv.sum(axis=1, keepdims=True)
        if lam.shape != gv.shape:
            raise StructuralError(f"multipliers of layer {k} have shape {lam.shape}, "
                                  f"expected {gv.shape}")
        total += float((lam * gv).sum())
    return residuals, total


def lagrangian_eval(model: LpModel, data, X, Lam, include_loss: bool = True):
    """Return ``(value, residuals, loss)``; residuals are ``x_{v,k} - f^k_a,v``."""
    prob = as_problem(model, data)
    Fs, _ = _forward(model, prob, X, 0.0, None)
    residuals, cterm = _constraint_terms(model, X, Fs, Lam)
    loss = 0.0
    if include_loss and len(prob.sup_index) and prob.targets is not None:
        logits, _ = model.readout.forward(_readout_input(model, prob, X, Fs))
        loss, _ = _loss(model, logits, prob.targets)
    return loss + cterm, residuals, loss


def lagrangian_gradients(model: LpModel, data, X, Lam, include_loss: bool = True,
                         dropout: float = 0.0, rng: np.random.Generator | None = None
                         ) -> Lagrangian:
    """Value and gradients of the Lagrangian.

    ``params`` holds d/dtheta for every network weight (keys of
    ``model.parameters()``), ``states`` d/dX per layer, and ``multipliers``
    the ascent direction d/dLambda = G(residual).
    """
    prob = as_problem(model, data)
    K = model.depth
    Fs, caches = _forward(model, prob, X, dropout, rng)
    residuals, cterm = _constraint_terms(model, X, Fs, Lam)

    dX, dF, dLam = [], [], []
    for r, lam in zip(residuals, Lam):
        gv = model.constraint.value(r)
        if model.multiplier_mode == "scalar":
            gv = gv.sum(axis=1, keepdims=True)
        dLam.append(gv)
        d = lam * model.constraint.grad(r)
        dX.append(d.copy())
        dF.append(-d)

    params = {k: np.zeros_like(v) for k, v in model.parameters().items()}
    loss, logits = 0.0, None
    if include_loss and len(prob.sup_index) and prob.targets is not None:
        logits, rcache = model.readout.forward(_readout_input(model, prob, X, Fs))
        loss, dlogits = _loss(model, logits, prob.targets)
        tape = model.readout.backward(rcache, dlogits)
        for name, g in tape.as_dict("readout.").items():
            params[name] += g
        if model.task == "node":
            dX[-1][prob.sup_index] += tape.input
        else:
            dF[-1] += tape.input[prob.graph_index]

    for k in reversed(range(K)):
        grad = model.layers[k].backward(prob.topology, caches[k], dF[k])
        for name, g in grad.params.items():
            params[f"layer{k}.{name}"] += g
        dX[k] += grad.states
        if k > 0 and not model.detach_layers:
            dX[k - 1] += grad.labels

    return Lagrangian(loss + cterm, loss, residuals, Fs, logits, params, dX, dLam)
