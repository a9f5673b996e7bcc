"""Directed graph data model, neighborhoods and disjoint-union batching.

Undirected graphs are stored with both directed arcs ``(u, v)`` and
``(v, u)``.  The neighborhood of a node is ``ne[v] = pa[v] | ch[v]``,
deduplicated and sorted by node id so that every reduction over it runs in a
fixed order.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import StructuralError


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable directed multigraph with node/arc features and supervision.

    ``targets`` holds class indices (int array, ``-1`` = no target) or real
    vectors (float array of shape ``(n, o)``).  ``supervised`` is a boolean
    mask over nodes.
    """

    node_count: int
    arcs: np.ndarray
    node_features: np.ndarray
    arc_features: np.ndarray
    targets: np.ndarray | None = None
    supervised: np.ndarray | None = None
    graph_target: int | None = None

    def __post_init__(self):
        n = int(self.node_count)
        arcs = np.asarray(self.arcs, dtype=np.int64).reshape(-1, 2)
        nf = np.asarray(self.node_features, dtype=np.float64)
        if nf.ndim == 1 and nf.size == 0:
            nf = nf.reshape(n, 0)
        af = np.asarray(self.arc_features, dtype=np.float64)
        if af.ndim == 1 and af.size == 0:
            af = af.reshape(len(arcs), 0)
        if nf.ndim != 2 or nf.shape[0] != n:
            raise StructuralError(f"node_features must have shape ({n}, m), got {nf.shape}")
        if af.ndim != 2 or af.shape[0] != len(arcs):
            raise StructuralError(
                f"arc_features must have shape ({len(arcs)}, d), got {af.shape}")
        if len(arcs) and (arcs.min() < 0 or arcs.max() >= n):
            bad = arcs[(arcs < 0).any(axis=1) | (arcs >= n).any(axis=1)]
            raise StructuralError(f"arc endpoint out of range [0, {n}): {bad[0].tolist()}")
        sup = np.zeros(n, dtype=bool) if self.supervised is None else np.asarray(
            self.supervised, dtype=bool)
        if sup.shape != (n,):
            raise StructuralError(f"supervised mask must have shape ({n},)")
        tg = self.targets
        if tg is not None:
            tg = np.asarray(tg)
            if tg.shape[0] != n:
                raise StructuralError("targets must have one row per node")
            if tg.ndim == 1:
                tg = tg.astype(np.int64)
                if sup.any() and (tg[sup] < 0).any():
                    raise StructuralError("every supervised node needs a target")
            else:
                tg = tg.astype(np.float64)
        elif sup.any():
            raise StructuralError("supervised nodes present but no targets given")
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "arcs", arcs)
        object.__setattr__(self, "node_features", nf)
        object.__setattr__(self, "arc_features", af)
        object.__setattr__(self, "targets", tg)
        object.__setattr__(self, "supervised", sup)
        for a in (arcs, nf, af, sup) + ((tg,) if tg is not None else ()):
            a.setflags(write=False)

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[Sequence[int]], *,
                   undirected: bool = True, node_features=None, edge_features=None,
                   targets=None, supervised=None, graph_target=None) -> "Graph":
        """Build a graph from an edge list; undirected edges become two arcs."""
        edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        ef = None if edge_features is None else np.asarray(edge_features, dtype=np.float64)
        if undirected:
            arcs = np.empty((2 * len(edges), 2), dtype=np.int64)
            arcs[0::2] = edges
            arcs[1::2] = edges[:, ::-1]
            if ef is not None:
                ef = np.repeat(ef, 2, axis=0)
        else:
            arcs = edges
        if ef is None:
            ef = np.zeros((len(arcs), 0))
        if node_features is None:
            node_features = np.zeros((node_count, 0))
        return cls(node_count, arcs, node_features, ef, targets, supervised, graph_target)

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    @property
    def arc_feature_dim(self) -> int:
        return self.arc_features.shape[1]

    @property
    def supervised_set(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.supervised).tolist())

    @cached_property
    def topology(self) -> "Topology":
        return Topology.build(self)


@dataclass(frozen=True)
class Neighborhood:
    parents: tuple[int, ...]
    children: tuple[int, ...]
    neighbors: tuple[int, ...]

    @property
    def degree(self) -> int:
        return len(self.neighbors)


def build_neighborhoods(g: Graph) -> list[Neighborhood]:
    """Per-node ``pa[v]``, ``ch[v]`` and ``ne[v]`` (sorted, deduplicated)."""
    n = g.node_count
    if len(g.arcs) and (g.arcs.min() < 0 or g.arcs.max() >= n):
        raise StructuralError("arc endpoint out of range")
    parents = [set() for _ in range(n)]
    children = [set() for _ in range(n)]
    for a, b in g.arcs.tolist():
        children[a].add(b)
        parents[b].add(a)
    return [Neighborhood(tuple(sorted(parents[v])), tuple(sorted(children[v])),
                         tuple(sorted(parents[v] | children[v]))) for v in range(n)]


@dataclass(frozen=True, eq=False)
class Topology:
    """Flat (node, neighbor) pair arrays used by the vectorised aggregators.

    Pair ``p`` stands for ``u = src[p]`` in ``ne[v]`` with ``v = dst[p]``;
    pairs are sorted by ``(dst, src)``.  ``arc_vu[p]`` carries ``l_(v,u)`` and
    ``arc_uv[p]`` carries ``l_(u,v)``; a missing direction is zero-filled and
    parallel arcs have their features summed.
    """

    node_count: int
    dst: np.ndarray
    src: np.ndarray
    degree: np.ndarray
    arc_vu: np.ndarray
    arc_uv: np.ndarray

    @classmethod
    def build(cls, g: Graph) -> "Topology":
        n, arcs = g.node_count, g.arcs
        d = g.arc_feature_dim
        if len(arcs) == 0:
            empty = np.zeros(0, dtype=np.int64)
            return cls(n, empty, empty, np.zeros(n, dtype=np.int64),
                       np.zeros((0, d)), np.zeros((0, d)))
        loops = arcs[:, 0] == arcs[:, 1]
        if loops.any():
            warnings.warn(f"graph has {int(loops.sum())} self-loop arc(s); "
                          "the node is treated as its own neighbor", stacklevel=3)
        both = np.concatenate([arcs, arcs[:, ::-1]])
        keys = np.unique(both[:, 0] * n + both[:, 1])
        dst, src = keys // n, keys % n
        arc_vu = np.zeros((len(keys), d))
        arc_uv = np.zeros((len(keys), d))
        if d:
            fwd = np.searchsorted(keys, arcs[:, 0] * n + arcs[:, 1])
            rev = np.searchsorted(keys, arcs[:, 1] * n + arcs[:, 0])
            np.add.at(arc_vu, fwd, g.arc_features)
            np.add.at(arc_uv, rev, g.arc_features)
        degree = np.bincount(dst, minlength=n)
        for a in (dst, src, degree, arc_vu, arc_uv):
            a.setflags(write=False)
        return cls(n, dst, src, degree, arc_vu, arc_uv)

    def segment_sum(self, values: np.ndarray) -> np.ndarray:
        """Sum per-pair rows into their destination node (ordered reduction)."""
        out = np.zeros((self.node_count,) + values.shape[1:])
        np.add.at(out, self.dst, values)
        return out


@dataclass(frozen=True, eq=False)
class GraphBatch:
    """Several graphs viewed as one graph with disconnected components."""

    graphs: tuple[Graph, ...]
    offsets: np.ndarray
    merged: Graph = field(repr=False)

    def __len__(self):
        return len(self.graphs)

    @property
    def node_count(self) -> int:
        return self.merged.node_count

    @cached_property
    def graph_index(self) -> np.ndarray:
        """Graph id of every node of the merged graph."""
        return np.repeat(np.arange(len(self.graphs)), np.diff(self.offsets))

    @cached_property
    def graph_targets(self) -> np.ndarray | None:
        if not self.graphs or any(g.graph_target is None for g in self.graphs):
            return None
        return np.array([g.graph_target for g in self.graphs], dtype=np.int64)

    def nodes_of(self, i: int) -> np.ndarray:
        return np.arange(self.offsets[i], self.offsets[i + 1])


def disjoint_union(graphs: Sequence[Graph]) -> GraphBatch:
    """Merge graphs into one, shifting node ids by cumulative offsets."""
    graphs = tuple(graphs)
    offsets = np.zeros(len(graphs) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([g.node_count for g in graphs])
    if not graphs:
        return GraphBatch(graphs, offsets, Graph(0, np.zeros((0, 2)), np.zeros((0, 0)),
                                                 np.zeros((0, 0))))
    m, d = graphs[0].feature_dim, graphs[0].arc_feature_dim
    for i, g in enumerate(graphs):
        if g.feature_dim != m or g.arc_feature_dim != d:
            raise StructuralError(
                f"graph {i} has feature dims (m={g.feature_dim}, d={g.arc_feature_dim}), "
                f"expected (m={m}, d={d})")
    if len(graphs) == 1:
        return GraphBatch(graphs, offsets, graphs[0])

    arcs = np.concatenate([g.arcs + off for g, off in zip(graphs, offsets)])
    targets = None
    kinds = {None if g.targets is None else g.targets.ndim for g in graphs}
    if kinds == {2}:
        targets = np.concatenate([g.targets for g in graphs])
    elif kinds <= {1, None} and kinds != {None}:
        targets = np.concatenate([np.full(g.node_count, -1, dtype=np.int64)
                                  if g.targets is None else g.targets for g in graphs])
    elif kinds != {None}:
        raise StructuralError("cannot mix class and real-valued node targets")
    merged = Graph(int(offsets[-1]), arcs,
                   np.concatenate([g.node_features for g in graphs]),
                   np.concatenate([g.arc_features for g in graphs]),
                   targets, np.concatenate([g.supervised for g in graphs]))
    return GraphBatch(graphs, offsets, merged)
