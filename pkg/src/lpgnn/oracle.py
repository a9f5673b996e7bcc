"""Classic GNN* encoding: synchronous fixed-point iteration of the transition.

This is a deliberately naive per-node implementation (python loops over
``build_neighborhoods`` and single-vector ``mlp_forward`` calls).  It shares
no code with the vectorised aggregators, so it can be used to cross-check the
residuals reported by the trainer.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aggregators import Aggregator, GcnAggregator, GinAggregator, PairwiseAggregator
from .errors import StructuralError
from .graph import Graph, GraphBatch, build_neighborhoods
from .ndmath import mlp_forward


@dataclass
class FixedPointRun:
    max_iterations: int = 1000
    tolerance: float = 1e-6
    keep_trajectory: bool = False
    trajectory: list = field(default_factory=list)


def _stack(aggs) -> list[Aggregator]:
    layers = getattr(aggs, "layers", aggs)
    if isinstance(layers, Aggregator):
        layers = [layers]
    return list(layers)


def _graph(g) -> Graph:
    return g.merged if isinstance(g, GraphBatch) else g


class _Encoder:
    """Per-node transition for one layer; arc labels looked up per pair."""

    def __init__(self, agg: Aggregator, g: Graph):
        self.agg = agg
        self.nbhd = build_neighborhoods(g)
        d = agg.arc_dim
        if d and g.arc_feature_dim != d:
            raise StructuralError(f"graph arc features have width {g.arc_feature_dim}, "
                                  f"aggregator expects {agg.arc_dim}")
        self.arc = {}
        if d:
            for (a, b), lab in zip(g.arcs.tolist(), g.arc_features):
                self.arc[a, b] = self.arc.get((a, b), 0.0) + lab
        self.zero_arc = np.zeros(d)

    def label(self, a, b):
        return self.arc.get((a, b), self.zero_arc)

    def node(self, v, X, L):
        agg, ne = self.agg, self.nbhd[v].neighbors
        s = agg.state_dim
        if isinstance(agg, PairwiseAggregator):
            out = np.zeros(s)
            for u in ne:
                parts = [X[u]]
                if agg.neighbor_labels:
                    parts.append(L[u])
                if agg.arc_dim:
                    parts += [self.label(v, u), self.label(u, v)]
                if agg.self_state:
                    parts.append(X[v])
                parts.append(L[v])
                out = out + mlp_forward(agg.h, np.concatenate(parts))
            if agg.mean and ne:
                out = out / len(ne)
            return out
        if isinstance(agg, GinAggregator):
            pooled = (1.0 + agg.eps) * X[v]
            for u in ne:
                pooled = pooled + X[u]
            return mlp_forward(agg.h, np.concatenate([pooled, L[v]]))
        if isinstance(agg, GcnAggregator):
            pre = mlp_forward(agg.h_self, np.concatenate([X[v], L[v]]))
            for u in ne:
                c = 1.0 / np.sqrt(len(self.nbhd[u]) * len(ne))
                pre = pre + c * mlp_forward(agg.h_nbr, np.concatenate([X[u], L[u]]))
            return np.tanh(pre)
        raise StructuralError(f"oracle has no rule for {type(agg).__name__}")

    def step(self, X, L):
        return np.array([self.node(v, X, L) for v in range(len(self.nbhd))]).reshape(X.shape)


def _labels(g: Graph, states, k):
    return g.node_features if k == 0 else states[k - 1]


def fixed_point_iterate(aggs, g, run: FixedPointRun | None = None, init=None):
    """Iterate each layer to a fixed point before moving to the next.

    ``init`` is a list of per-layer states (zeros if omitted).  Returns
    ``(states, iterations, converged)``; ``iterations`` is the total over
    layers and ``converged`` is false if any layer hit ``max_iterations``.
    """
    layers, g = _stack(aggs), _graph(g)
    run = FixedPointRun() if run is None else run
    n = g.node_count
    if init is None:
        states = [np.zeros((n, a.state_dim)) for a in layers]
    else:
        states = [np.array(x, dtype=np.float64) for x in init]
    if len(states) != len(layers):
        raise StructuralError(f"expected states for {len(layers)} layers, got {len(states)}")
    for k, (agg, x) in enumerate(zip(layers, states)):
        if x.shape != (n, agg.state_dim):
            raise StructuralError(f"layer {k} states must have shape ({n}, {agg.state_dim})")
    total, converged = 0, True
    for k, agg in enumerate(layers):
        enc = _Encoder(agg, g)
        L = _labels(g, states, k)
        done = False
        for _ in range(run.max_iterations):
            new = enc.step(states[k], L)
            total += 1
            delta = float(np.abs(new - states[k]).max()) if new.size else 0.0
            states[k] = new
            if run.keep_trajectory:
                run.trajectory.append((k, new.copy()))
            if delta <= run.tolerance:
                done = True
                break
        converged = converged and done
    return states, total, converged


def oracle_residual(aggs, g, states) -> list[np.ndarray]:
    """Per-layer, per-node ``||x_v - f_a,v||_inf``."""
    layers, g = _stack(aggs), _graph(g)
    out = []
    for k, agg in enumerate(layers):
        enc = _Encoder(agg, g)
        X = np.asarray(states[k], dtype=np.float64)
        F = enc.step(X, _labels(g, states, k))
        out.append(np.abs(X - F).max(axis=1) if X.size else np.zeros(len(X)))
    return out
