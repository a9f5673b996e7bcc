"""Datasets: Zachary's karate club, synthetic subgraph-matching and clique
localization tasks, one-hot degree features and a plain-text dataset format.

Dataset file format (``lpgnn-dataset`` version 1), one record per line::

    lpgnn-dataset 1
    task node                  # or: graph
    dims <m> <d>               # node / arc feature widths
    graphs <count>
    graph <nodes> <arcs> <graph target | ->
    node <target | -> <supervised 0|1> <f_1> ... <f_m>     (one per node)
    arc <source> <target> <e_1> ... <e_d>                  (one per arc)
    end

Node targets are class indices, ``-`` for none, or ``v:<a>,<b>,...`` for a
real vector.  Floats are written with ``repr`` so a write/read cycle is exact.
Blank lines and ``#`` comments are ignored.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, StructuralError
from .graph import Graph, GraphBatch, disjoint_union

# Zachary (1977), 78 undirected edges
KARATE_EDGES = (
    (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6), (0, 7), (0, 8), (0, 10), (0, 11),
    (0, 12), (0, 13), (0, 17), (0, 19), (0, 21), (0, 31), (1, 2), (1, 3), (1, 7), (1, 13),
    (1, 17), (1, 19), (1, 21), (1, 30), (2, 3), (2, 7), (2, 8), (2, 9), (2, 13), (2, 27),
    (2, 28), (2, 32), (3, 7), (3, 12), (3, 13), (4, 6), (4, 10), (5, 6), (5, 10), (5, 16),
    (6, 16), (8, 30), (8, 32), (8, 33), (9, 33), (13, 33), (14, 32), (14, 33), (15, 32),
    (15, 33), (18, 32), (18, 33), (19, 33), (20, 32), (20, 33), (22, 32), (22, 33),
    (23, 25), (23, 27), (23, 29), (23, 32), (23, 33), (24, 25), (24, 27), (24, 31),
    (25, 31), (26, 29), (26, 33), (27, 33), (28, 31), (28, 33), (29, 32), (29, 33),
    (30, 32), (30, 33), (31, 32), (31, 33), (32, 33),
)

# four communities of the maximum-modularity partition (Q = 0.4198)
KARATE_CLASSES = (
    0, 0, 0, 0, 1, 1, 1, 0, 2, 2, 1, 0, 0, 0, 2, 2, 1, 0, 2, 0, 2, 0, 2, 3, 3, 3, 2, 3,
    3, 2, 2, 3, 2, 2,
)


def load_karate(features: str = "none") -> Graph:
    """Karate club graph, every node supervised with its community.

    ``features`` is ``"none"`` (m = 0) or ``"degree"`` (one-hot degree).
    """
    g = Graph.from_edges(34, KARATE_EDGES, targets=np.array(KARATE_CLASSES),
                         supervised=np.ones(34, dtype=bool))
    if features == "degree":
        return one_hot_degree_features(g, int(g.topology.degree.max()))
    if features != "none":
        raise ValueError("features must be 'none' or 'degree'")
    return g


def one_hot_degree_features(g: Graph, max_degree: int) -> Graph:
    """Replace node features by the indicator of ``|ne[v]|`` (width max_degree + 1)."""
    deg = g.topology.degree
    over = np.flatnonzero(deg > max_degree)
    if over.size:
        raise StructuralError(f"nodes {over.tolist()} exceed max_degree={max_degree} "
                              f"(degrees {deg[over].tolist()})")
    feats = np.zeros((g.node_count, max_degree + 1))
    feats[np.arange(g.node_count), deg] = 1.0
    return Graph(g.node_count, g.arcs, feats, g.arc_features, g.targets, g.supervised,
                 g.graph_target)


@dataclass(frozen=True)
class SubgraphTaskSpec:
    num_graphs: int = 100
    graph_size: int = 7
    target_size: int = 3
    feature_max: int = 10
    noise_std: float = 0.25
    mean_degree: float = 3.0
    seed: int = 0


@dataclass(frozen=True)
class CliqueTaskSpec:
    num_graphs: int = 100
    graph_size: int = 7
    clique_size: int = 3
    feature_max: int = 8
    noise_std: float = 0.0
    mean_degree: float = 3.0
    seed: int = 0


def scale_features(batch: GraphBatch, factor: float) -> GraphBatch:
    """Multiply every node feature by ``factor`` (graph structure untouched)."""
    return disjoint_union([Graph(g.node_count, g.arcs, g.node_features * factor, g.arc_features,
                                 g.targets, g.supervised, g.graph_target)
                           for g in batch.graphs])


def _random_connected(size: int, rng) -> set[tuple[int, int]]:
    edges = {(int(rng.integers(i)), i) for i in range(1, size)}
    for a, b in itertools.combinations(range(size), 2):
        if (a, b) not in edges and rng.random() < 0.5:
            edges.add((a, b))
    return edges


def _has_clique(adj: list[set[int]], nodes: tuple[int, ...], size: int) -> bool:
    # any clique of `size` nodes that contains all of `nodes`
    common = set.intersection(*(adj[v] for v in nodes))
    rest = size - len(nodes)
    return any(all(b in adj[a] for a, b in itertools.combinations(extra, 2))
               for extra in itertools.combinations(sorted(common), rest))


def _plant(n: int, pattern_edges, pattern_size: int, rng, mean_degree: float,
           max_clique: int | None = None):
    """Embed a pattern on random node positions and grow a connected background.

    Background nodes attach one at a time to an already placed node; extra
    edges are then added between pairs that are not both pattern nodes until
    the requested mean degree is reached.  With ``max_clique`` set, an extra
    edge is rejected if it would create a clique larger than that.
    """
    slots = rng.permutation(n)
    pattern_nodes = [int(v) for v in slots[:pattern_size]]
    background = [int(v) for v in slots[pattern_size:]]
    adj = [set() for _ in range(n)]

    def connect(a, b):
        adj[a].add(b)
        adj[b].add(a)

    for a, b in pattern_edges:
        connect(pattern_nodes[a], pattern_nodes[b])
    placed = list(pattern_nodes)
    for v in background:
        connect(v, placed[int(rng.integers(len(placed)))])
        placed.append(v)

    in_pattern = set(pattern_nodes)
    want = int(round(mean_degree * n / 2))
    candidates = [(a, b) for a, b in itertools.combinations(range(n), 2)
                  if not (a in in_pattern and b in in_pattern)]
    order = rng.permutation(len(candidates))
    edges_now = sum(len(s) for s in adj) // 2
    for i in order:
        if edges_now >= want:
            break
        a, b = candidates[i]
        if b in adj[a]:
            continue
        if max_clique is not None:
            connect(a, b)
            bad = _has_clique(adj, (a, b), max_clique + 1)
            adj[a].discard(b)
            adj[b].discard(a)
            if bad:
                continue
        connect(a, b)
        edges_now += 1
    edges = sorted((a, b) for a in range(n) for b in adj[a] if a < b)
    return pattern_nodes, edges


def _split(graphs, num):
    return tuple(disjoint_union(graphs[i * num:(i + 1) * num]) for i in range(3))


def gen_subgraph_matching(spec: SubgraphTaskSpec = SubgraphTaskSpec()):
    """Train/val/test batches of graphs that all contain one random target.

    The target (connected, ``target_size`` nodes, integer features) is drawn
    once per seed and planted in every graph; its nodes are the positives.
    All node features get Gaussian noise of ``noise_std``.
    """
    if spec.target_size > spec.graph_size or spec.target_size < 1:
        raise StructuralError(f"target_size={spec.target_size} infeasible for "
                              f"graph_size={spec.graph_size}")
    rng = np.random.default_rng(spec.seed)
    t, n = spec.target_size, spec.graph_size
    pattern = _random_connected(t, rng)
    pattern_feats = rng.integers(0, spec.feature_max + 1, size=t).astype(np.float64)
    graphs = []
    for _ in range(3 * spec.num_graphs):
        nodes, edges = _plant(n, pattern, t, rng, spec.mean_degree)
        feats = rng.integers(0, spec.feature_max + 1, size=n).astype(np.float64)
        feats[nodes] = pattern_feats
        feats += rng.normal(0.0, spec.noise_std, size=n) if spec.noise_std else 0.0
        y = np.zeros(n, dtype=np.int64)
        y[nodes] = 1
        graphs.append(Graph.from_edges(n, edges, node_features=feats[:, None], targets=y,
                                       supervised=np.ones(n, dtype=bool)))
    return _split(graphs, spec.num_graphs)


def gen_clique(spec: CliqueTaskSpec = CliqueTaskSpec()):
    """Train/val/test batches with a planted clique; its nodes are positives.

    Background edges never complete a clique larger than ``clique_size``;
    other cliques of that size may appear by chance and stay negative.
    """
    if spec.clique_size > spec.graph_size or spec.clique_size < 1:
        raise StructuralError(f"clique_size={spec.clique_size} infeasible for "
                              f"graph_size={spec.graph_size}")
    rng = np.random.default_rng(spec.seed)
    c, n = spec.clique_size, spec.graph_size
    pattern = set(itertools.combinations(range(c), 2))
    graphs = []
    for _ in range(3 * spec.num_graphs):
        nodes, edges = _plant(n, pattern, c, rng, spec.mean_degree, max_clique=c)
        feats = rng.integers(0, spec.feature_max + 1, size=n).astype(np.float64)
        if spec.noise_std:
            feats += rng.normal(0.0, spec.noise_std, size=n)
        y = np.zeros(n, dtype=np.int64)
        y[nodes] = 1
        graphs.append(Graph.from_edges(n, edges, node_features=feats[:, None], targets=y,
                                       supervised=np.ones(n, dtype=bool)))
    return _split(graphs, spec.num_graphs)


# ---------------------------------------------------------------- file format

MAGIC = "lpgnn-dataset"
VERSION = 1


def _fmt_target(t) -> str:
    if t is None:
        return "-"
    if np.ndim(t):
        return "v:" + ",".join(repr(float(x)) for x in t)
    return "-" if int(t) < 0 else str(int(t))


def write_dataset_file(path, batch: GraphBatch | list[Graph], task: str = "node") -> None:
    graphs = list(batch.graphs if isinstance(batch, GraphBatch) else batch)
    m = graphs[0].feature_dim if graphs else 0
    d = graphs[0].arc_feature_dim if graphs else 0
    lines = [f"{MAGIC} {VERSION}", f"task {task}", f"dims {m} {d}", f"graphs {len(graphs)}"]
    for g in graphs:
        gt = "-" if g.graph_target is None else str(int(g.graph_target))
        lines.append(f"graph {g.node_count} {len(g.arcs)} {gt}")
        for v in range(g.node_count):
            t = None if g.targets is None else g.targets[v]
            feats = " ".join(repr(float(x)) for x in g.node_features[v])
            lines.append(f"node {_fmt_target(t)} {int(g.supervised[v])} {feats}".rstrip())
        for (a, b), f in zip(g.arcs.tolist(), g.arc_features):
            feats = " ".join(repr(float(x)) for x in f)
            lines.append(f"arc {a} {b} {feats}".rstrip())
        lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _records(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def load_dataset_file(path) -> GraphBatch:
    """Parse a dataset file; errors carry the offending line number."""
    batch, _ = read_dataset_file(path)
    return batch


def read_dataset_file(path):
    """Like :func:`load_dataset_file` but also returns the declared task kind."""
    recs = _records(Path(path).read_text(encoding="utf-8"))

    def expect(keyword, nargs=None):
        try:
            lineno, toks = next(recs)
        except StopIteration:
            raise ParseError(f"unexpected end of file, expected '{keyword}'") from None
        if toks[0] != keyword:
            raise ParseError(f"expected '{keyword}', found '{toks[0]}'", lineno)
        if nargs is not None and len(toks) - 1 != nargs:
            raise ParseError(f"'{keyword}' takes {nargs} field(s), got {len(toks) - 1}", lineno)
        return lineno, toks[1:]

    def number(tok, kind, lineno):
        try:
            return kind(tok)
        except ValueError:
            raise ParseError(f"bad {kind.__name__} value {tok!r}", lineno) from None

    lineno, (magic, *rest) = next(recs, (1, ["<empty>"]))
    if magic != MAGIC or len(rest) != 1 or rest[0] != str(VERSION):
        raise ParseError(f"not an {MAGIC} v{VERSION} file", lineno)
    lineno, (task,) = expect("task", 1)
    if task not in ("node", "graph"):
        raise ParseError(f"unknown task kind {task!r}", lineno)
    lineno, dims = expect("dims", 2)
    m, d = (number(x, int, lineno) for x in dims)
    lineno, (count,) = expect("graphs", 1)
    count = number(count, int, lineno)

    graphs = []
    for _ in range(count):
        lineno, head = expect("graph", 3)
        n, n_arcs = number(head[0], int, lineno), number(head[1], int, lineno)
        gt = None if head[2] == "-" else number(head[2], int, lineno)
        feats = np.zeros((n, m))
        sup = np.zeros(n, dtype=bool)
        targets: list = []
        for v in range(n):
            lineno, toks = expect("node", 2 + m)
            tok = toks[0]
            if tok == "-":
                targets.append(None)
            elif tok.startswith("v:"):
                targets.append([number(x, float, lineno) for x in tok[2:].split(",")])
            else:
                targets.append(number(tok, int, lineno))
            if toks[1] not in ("0", "1"):
                raise ParseError("supervised flag must be 0 or 1", lineno)
            sup[v] = toks[1] == "1"
            feats[v] = [number(x, float, lineno) for x in toks[2:]]
        arcs = np.zeros((n_arcs, 2), dtype=np.int64)
        afeats = np.zeros((n_arcs, d))
        for i in range(n_arcs):
            lineno, toks = expect("arc", 2 + d)
            arcs[i] = [number(x, int, lineno) for x in toks[:2]]
            afeats[i] = [number(x, float, lineno) for x in toks[2:]]
        expect("end", 0)
        if all(t is None for t in targets):
            tarr = None
        elif any(isinstance(t, list) for t in targets):
            if any(t is None or not isinstance(t, list) for t in targets):
                raise ParseError("vector targets must be given for every node", lineno)
            tarr = np.array(targets, dtype=np.float64)
        else:
            tarr = np.array([-1 if t is None else t for t in targets], dtype=np.int64)
        try:
            graphs.append(Graph(n, arcs, feats, afeats, tarr, sup, gt))
        except StructuralError as exc:
            raise ParseError(str(exc), lineno) from exc
    extra = next(recs, None)
    if extra is not None:
        raise ParseError(f"trailing content '{extra[1][0]}'", extra[0])
    if not graphs:
        empty = GraphBatch((), np.zeros(1, dtype=np.int64),
                           Graph(0, np.zeros((0, 2)), np.zeros((0, m)), np.zeros((0, d))))
        return empty, task
    return disjoint_union(graphs), task
