"""State transition functions ``f_a,v``: neighborhood aggregation of MLP messages.

The GNN* transition evaluates a network ``h`` on every (node, neighbor) pair,

    f_a,v = sum_{u in ne[v]} h(x_u, l_u, l_(v,u), l_(u,v), x_v, l_v)

and the AVG variant divides by ``|ne[v]|``.  Isolated nodes get the zero
vector.  GIN- and GCN-style transitions reuse the same forward/backward
contract.

``forward`` works on all nodes at once from a :class:`~lpgnn.graph.Topology`;
``backward`` maps a cotangent on the ``(n, s)`` output to gradients for the
network weights, the states ``X`` and the node labels ``L``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import StructuralError
from .graph import Graph, Topology
from .ndmath import Mlp

log = logging.getLogger(__name__)

KINDS = ("sum", "avg", "gin", "gcn")


@dataclass
class AggregatorGrad:
    params: dict[str, np.ndarray]
    states: np.ndarray
    labels: np.ndarray


def _dropout_mask(shape, rate, rng):
    if not rate or rng is None:
        return None
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


class Aggregator:
    kind = ""

    def __init__(self, state_dim: int, label_dim: int, arc_dim: int = 0):
        self.state_dim = int(state_dim)
        self.label_dim = int(label_dim)
        self.arc_dim = int(arc_dim)
        self._warned_isolated = False

    def networks(self) -> dict[str, Mlp]:
        raise NotImplementedError

    def parameters(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for name, net in self.networks().items():
            out.update(net.parameters(f"{prefix}{name}."))
        return out

    def _check(self, topo: Topology, X: np.ndarray, L: np.ndarray):
        n = topo.node_count
        if X.shape != (n, self.state_dim):
            raise StructuralError(f"states must have shape ({n}, {self.state_dim}), got {X.shape}")
        if L.shape != (n, self.label_dim):
            raise StructuralError(f"labels must have shape ({n}, {self.label_dim}), got {L.shape}")
        if self.arc_dim and topo.arc_vu.shape[1] != self.arc_dim:
            raise StructuralError(f"graph arc features have width {topo.arc_vu.shape[1]}, "
                                  f"aggregator expects {self.arc_dim}")
        if not self._warned_isolated and n and (topo.degree == 0).any():
            self._warned_isolated = True
            log.warning("%d isolated node(s): their transition output is the zero vector",
                        int((topo.degree == 0).sum()))

    def forward(self, topo, X, L, dropout=0.0, rng=None):
        raise NotImplementedError

    def backward(self, topo, cache, cotangent) -> AggregatorGrad:
        raise NotImplementedError

    def copy(self) -> "Aggregator":
        raise NotImplementedError


class PairwiseAggregator(Aggregator):
    """SUM / AVG of ``h`` over neighbor pairs (the GNN* transition).

    ``neighbor_labels=False`` drops the ``l_u`` slot; deeper layers use it so
    that their input is ``(x_u, x_v, x_{v,k-1})``.
    """

    def __init__(self, h: Mlp, state_dim: int, label_dim: int, arc_dim: int = 0,
                 mean: bool = False, neighbor_labels: bool = True, self_state: bool = True):
        super().__init__(state_dim, label_dim, arc_dim)
        self.h = h
        self.mean = mean
        self.neighbor_labels = neighbor_labels
        self.self_state = self_state
        self.kind = "avg" if mean else "sum"
        if h.input_dim != self.input_width or h.output_dim != state_dim:
            raise StructuralError(f"h must map {self.input_width} -> {state_dim}, "
                                  f"got {h.input_dim} -> {h.output_dim}")

    @property
    def input_width(self) -> int:
        s, m, d = self.state_dim, self.label_dim, self.arc_dim
        return ((2 if self.self_state else 1) * s + 2 * d
                + (2 * m if self.neighbor_labels else m))

    def networks(self):
        return {"h": self.h}

    def copy(self):
        return PairwiseAggregator(self.h.copy(), self.state_dim, self.label_dim,
                                  self.arc_dim, self.mean, self.neighbor_labels,
                                  self.self_state)

    def pair_inputs(self, topo: Topology, X, L) -> np.ndarray:
        parts = [X[topo.src]]
        if self.neighbor_labels:
            parts.append(L[topo.src])
        if self.arc_dim:
            parts += [topo.arc_vu, topo.arc_uv]
        if self.self_state:
            parts.append(X[topo.dst])
        parts.append(L[topo.dst])
        return np.concatenate(parts, axis=1)

    def forward(self, topo, X, L, dropout=0.0, rng=None):
        self._check(topo, X, L)
        Z = self.pair_inputs(topo, X, L)
        mask = _dropout_mask(Z.shape, dropout, rng)
        if mask is not None:
            Z = Z * mask
        H, hcache = self.h.forward(Z)
        F = topo.segment_sum(H)
        if self.mean:
            F /= np.maximum(topo.degree, 1)[:, None]
        return F, (hcache, mask)

    def backward(self, topo, cache, cotangent):
        hcache, mask = cache
        cot = cotangent
        if self.mean:
            cot = cot / np.maximum(topo.degree, 1)[:, None]
        tape = self.h.backward(hcache, cot[topo.dst])
        dZ = tape.input if mask is None else tape.input * mask
        s, m, d = self.state_dim, self.label_dim, self.arc_dim
        dX = np.zeros((topo.node_count, s))
        dL = np.zeros((topo.node_count, m))
        c = 0
        np.add.at(dX, topo.src, dZ[:, c:c + s])
        c += s
        if self.neighbor_labels:
            np.add.at(dL, topo.src, dZ[:, c:c + m])
            c += m
        c += 2 * d
        if self.self_state:
            np.add.at(dX, topo.dst, dZ[:, c:c + s])
            c += s
        np.add.at(dL, topo.dst, dZ[:, c:c + m])
        return AggregatorGrad(tape.as_dict("h."), dX, dL)


class GinAggregator(Aggregator):
    """``f_a,v = h((1 + eps) x_v + sum_{u in ne[v]} x_u, l_v)`` with fixed eps."""

    kind = "gin"

    def __init__(self, h: Mlp, state_dim: int, label_dim: int, arc_dim: int = 0,
                 eps: float = 0.0):
        super().__init__(state_dim, label_dim, arc_dim)
        self.h = h
        self.eps = float(eps)
        if h.input_dim != state_dim + label_dim or h.output_dim != state_dim:
            raise StructuralError("GIN h must map s + m -> s")

    def networks(self):
        return {"h": self.h}

    def copy(self):
        return GinAggregator(self.h.copy(), self.state_dim, self.label_dim,
                             self.arc_dim, self.eps)

    def forward(self, topo, X, L, dropout=0.0, rng=None):
        self._check(topo, X, L)
        pooled = (1.0 + self.eps) * X + topo.segment_sum(X[topo.src])
        Z = np.concatenate([pooled, L], axis=1)
        mask = _dropout_mask(Z.shape, dropout, rng)
        if mask is not None:
            Z = Z * mask
        F, hcache = self.h.forward(Z)
        return F, (hcache, mask)

    def backward(self, topo, cache, cotangent):
        hcache, mask = cache
        tape = self.h.backward(hcache, cotangent)
        dZ = tape.input if mask is None else tape.input * mask
        s = self.state_dim
        dpool = dZ[:, :s]
        dX = (1.0 + self.eps) * dpool
        np.add.at(dX, topo.src, dpool[topo.dst])
        return AggregatorGrad(tape.as_dict("h."), dX, dZ[:, s:].copy())


class GcnAggregator(Aggregator):
    """``f_a,v = tanh(h0(x_v, l_v) + sum_u c_uv h1(x_u, l_u))``,
    ``c_uv = 1 / sqrt(|ne[u]| |ne[v]|)``."""

    kind = "gcn"

    def __init__(self, h_self: Mlp, h_nbr: Mlp, state_dim: int, label_dim: int,
                 arc_dim: int = 0):
        super().__init__(state_dim, label_dim, arc_dim)
        self.h_self, self.h_nbr = h_self, h_nbr
        for net in (h_self, h_nbr):
            if net.input_dim != state_dim + label_dim or net.output_dim != state_dim:
                raise StructuralError("GCN networks must map s + m -> s")

    def networks(self):
        return {"h_self": self.h_self, "h_nbr": self.h_nbr}

    def copy(self):
        return GcnAggregator(self.h_self.copy(), self.h_nbr.copy(), self.state_dim,
                             self.label_dim, self.arc_dim)

    @staticmethod
    def coefficients(topo: Topology) -> np.ndarray:
        deg = topo.degree.astype(np.float64)
        return 1.0 / np.sqrt(deg[topo.src] * deg[topo.dst])

    def forward(self, topo, X, L, dropout=0.0, rng=None):
        self._check(topo, X, L)
        Z = np.concatenate([X, L], axis=1)
        mask = _dropout_mask(Z.shape, dropout, rng)
        if mask is not None:
            Z = Z * mask
        A, cache_self = self.h_self.forward(Z)
        B, cache_nbr = self.h_nbr.forward(Z)
        c = self.coefficients(topo)[:, None]
        F = np.tanh(A + topo.segment_sum(c * B[topo.src]))
        return F, (cache_self, cache_nbr, mask, F)

    def backward(self, topo, cache, cotangent):
        cache_self, cache_nbr, mask, F = cache
        dpre = cotangent * (1.0 - F * F)
        c = self.coefficients(topo)[:, None]
        dB = np.zeros_like(dpre)
        np.add.at(dB, topo.src, c * dpre[topo.dst])
        t_self = self.h_self.backward(cache_self, dpre)
        t_nbr = self.h_nbr.backward(cache_nbr, dB)
        dZ = t_self.input + t_nbr.input
        if mask is not None:
            dZ = dZ * mask
        s = self.state_dim
        params = t_self.as_dict("h_self.")
        params.update(t_nbr.as_dict("h_nbr."))
        return AggregatorGrad(params, dZ[:, :s].copy(), dZ[:, s:].copy())


def make_aggregator(kind: str, state_dim: int, label_dim: int, arc_dim: int,
                    hidden: list[int], rng: np.random.Generator, *,
                    neighbor_labels: bool = True, h_hidden_act: str = "tanh",
                    h_output_act: str = "identity", gin_eps: float = 0.0,
                    self_state: bool = True) -> Aggregator:
    """Build an aggregator with freshly initialised networks."""
    if kind in ("sum", "avg"):
        width = ((2 if self_state else 1) * state_dim + 2 * arc_dim
                 + (2 if neighbor_labels else 1) * label_dim)
        h = Mlp.init([width, *hidden, state_dim], rng, h_hidden_act, h_output_act)
        return PairwiseAggregator(h, state_dim, label_dim, arc_dim, mean=kind == "avg",
                                  neighbor_labels=neighbor_labels, self_state=self_state)
    if kind == "gin":
        h = Mlp.init([state_dim + label_dim, *hidden, state_dim], rng, h_hidden_act,
                     h_output_act)
        return GinAggregator(h, state_dim, label_dim, arc_dim, gin_eps)
    if kind == "gcn":
        sizes = [state_dim + label_dim, *hidden, state_dim]
        return GcnAggregator(Mlp.init(sizes, rng, h_hidden_act, "identity"),
                             Mlp.init(sizes, rng, h_hidden_act, "identity"),
                             state_dim, label_dim, arc_dim)
    raise ValueError(f"unknown aggregator {kind!r}; choose from {', '.join(KINDS)}")


def transition(agg: Aggregator, g: Graph, states: np.ndarray, v: int,
               labels: np.ndarray | None = None) -> np.ndarray:
    """``f_a,v`` for a single node; ``labels`` defaults to the node features."""
    L = g.node_features if labels is None else labels
    F, _ = agg.forward(g.topology, np.asarray(states, dtype=np.float64), L)
    return F[v]


def transition_backward(agg: Aggregator, g: Graph, states: np.ndarray, v: int,
                        cotangent: np.ndarray, labels: np.ndarray | None = None):
    """Gradients of ``cotangent . f_a,v``.

    Returns ``(weight grads, {u: d/dx_u for u in ne[v]}, d/dx_v)``.
    """
    topo = g.topology
    L = g.node_features if labels is None else labels
    F, cache = agg.forward(topo, np.asarray(states, dtype=np.float64), L)
    cot = np.zeros_like(F)
    cot[v] = cotangent
    grad = agg.backward(topo, cache, cot)
    nbrs = topo.src[topo.dst == v]
    return grad.params, {int(u): grad.states[u].copy() for u in nbrs}, grad.states[v].copy()
