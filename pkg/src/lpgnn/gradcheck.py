"""Finite-difference checks of the Lagrangian gradients on small random instances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .lagrangian import lagrangian_eval, lagrangian_gradients
from .model import LpModel, TrainConfig
from .ndmath import finite_diff_check

BLOCKS = ("theta_fa", "theta_fr", "states", "multipliers")


@dataclass
class Instance:
    model: LpModel
    graph: Graph
    states: list[np.ndarray]
    multipliers: list[np.ndarray]


def _kinks(model: LpModel) -> list[float]:
    c = model.constraint
    if c.variant == "abs":
        return [0.0]
    if c.variant in ("abs_eps", "lin_eps"):
        return [-c.epsilon, c.epsilon] if c.epsilon else [0.0]
    return []


def _off_kink(model, graph, X, margin):
    kinks = _kinks(model)
    if not kinks:
        return True
    _, residuals, _ = lagrangian_eval(model, graph, X, model.zero_multipliers(graph.node_count))
    r = np.concatenate([res.ravel() for res in residuals])
    return all(np.abs(r - k).min() > margin for k in kinks) if r.size else True


def random_instance(rng: np.random.Generator, *, layers: int = 1, aggregator: str = "sum",
                    constraint: str = "abs", eps: float = 0.0, max_nodes: int = 8,
                    feature_dim: int = 2, arc_dim: int = 1, n_classes: int = 3,
                    multiplier_mode: str = "vector", margin: float = 1e-3,
                    max_tries: int = 100) -> Instance:
    """Random graph, model, states and multipliers with residuals away from kinks."""
    for _ in range(max_tries):
        n = int(rng.integers(2, max_nodes + 1))
        pairs = [(a, b) for a in range(n) for b in range(n) if a != b]
        picks = rng.random(len(pairs)) < 0.4
        edges = [p for p, keep in zip(pairs, picks) if keep] or [pairs[0]]
        targets = rng.integers(0, n_classes, size=n)
        sup = rng.random(n) < 0.6
        sup[0] = True
        g = Graph.from_edges(n, edges, undirected=False,
                             node_features=rng.normal(size=(n, feature_dim)),
                             edge_features=rng.normal(size=(len(edges), arc_dim)),
                             targets=targets, supervised=sup)
        dims = tuple(int(s) for s in rng.integers(1, 4, size=layers))
        cfg = TrainConfig(layers=layers, state_dims=dims, hidden=(int(rng.integers(2, 5)),),
                          aggregator=aggregator, constraint=constraint, eps=eps,
                          multiplier_mode=multiplier_mode, seed=int(rng.integers(1 << 30)))
        model = LpModel.build(cfg, feature_dim, arc_dim, n_classes)
        X = [rng.normal(size=x.shape) for x in model.zero_states(n)]
        if _off_kink(model, g, X, margin):
            Lam = [rng.normal(size=l.shape) for l in model.zero_multipliers(n)]
            return Instance(model, g, X, Lam)
    raise RuntimeError("could not sample an instance away from the constraint kinks")


def check_gradients(inst: Instance, h: float = 1e-5) -> dict[str, float]:
    """Worst relative error per gradient block (weights of f_a, weights of f_r,
    states, multipliers) against central differences."""
    model, g, X, Lam = inst.model, inst.graph, inst.states, inst.multipliers
    grads = lagrangian_gradients(model, g, X, Lam)
    value = lambda: lagrangian_eval(model, g, X, Lam)[0]
    worst = dict.fromkeys(BLOCKS, 0.0)

    def probe(block, arr, analytic):
        def f(point):
            saved = arr.copy()
            arr[...] = point
            try:
                return value()
            finally:
                arr[...] = saved
        worst[block] = max(worst[block], finite_diff_check(f, arr.copy(), analytic, h))

    for name, p in model.parameters().items():
        probe("theta_fr" if name.startswith("readout.") else "theta_fa", p, grads.params[name])
    for x, d in zip(X, grads.states):
        probe("states", x, d)
    for lam, d in zip(Lam, grads.multipliers):
        probe("multipliers", lam, d)
    return worst
