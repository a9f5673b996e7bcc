from pathlib import Path

import networkx as nx
import numpy as np
import pytest

from lpgnn.datasets import (KARATE_CLASSES, CliqueTaskSpec, SubgraphTaskSpec, gen_clique,
                            gen_subgraph_matching, load_dataset_file, load_karate,
                            one_hot_degree_features, read_dataset_file, scale_features,
                            write_dataset_file)
from lpgnn.errors import ParseError, StructuralError
from lpgnn.graph import Graph, build_neighborhoods, disjoint_union

FIXTURE = Path(__file__).parent / "data" / "two_graphs.txt"


def _connected(g):
    G = nx.Graph()
    G.add_nodes_from(range(g.node_count))
    G.add_edges_from(g.arcs.tolist())
    return nx.is_connected(G)


def _bidirectional(g):
    arcs = set(map(tuple, g.arcs.tolist()))
    return all((b, a) in arcs for a, b in arcs)


def test_subgraph_shapes():
    splits = gen_subgraph_matching(SubgraphTaskSpec(seed=1))
    assert len(splits) == 3
    for b in splits:
        assert len(b) == 100
        for g in b.graphs:
            assert g.node_count == 7 and g.targets.sum() == 3
            assert g.supervised.all()
            assert _connected(g) and _bidirectional(g)


def test_subgraph_pattern_is_planted():
    tr, _, _ = gen_subgraph_matching(SubgraphTaskSpec(seed=2, noise_std=0.0))
    first = None
    for g in tr.graphs:
        pos = np.flatnonzero(g.targets)
        sub = nx.Graph([e for e in g.arcs.tolist() if e[0] in pos and e[1] in pos])
        sub.add_nodes_from(pos.tolist())
        for v in pos:
            sub.nodes[int(v)]["f"] = float(g.node_features[v, 0])
        if first is None:
            first = sub
        assert nx.is_connected(sub)
        assert nx.is_isomorphic(first, sub, node_match=lambda a, b: a["f"] == b["f"])


def test_subgraph_positive_rate():
    for b in gen_subgraph_matching(SubgraphTaskSpec(seed=5)):
        assert b.merged.targets.mean() == pytest.approx(3 / 7)


@pytest.mark.parametrize("gen,spec", [(gen_subgraph_matching, SubgraphTaskSpec),
                                      (gen_clique, CliqueTaskSpec)])
def test_deterministic(gen, spec, tmp_path):
    a, b = gen(spec(seed=9)), gen(spec(seed=9))
    for i, (x, y) in enumerate(zip(a, b)):
        write_dataset_file(tmp_path / f"a{i}", x)
        write_dataset_file(tmp_path / f"b{i}", y)
        assert (tmp_path / f"a{i}").read_bytes() == (tmp_path / f"b{i}").read_bytes()
    c = gen(spec(seed=10))
    assert not np.array_equal(a[0].merged.node_features, c[0].merged.node_features)


def test_clique_planted():
    for b in gen_clique(CliqueTaskSpec(seed=4)):
        assert b.merged.targets.mean() == pytest.approx(3 / 7)
        for g in b.graphs:
            assert _connected(g) and _bidirectional(g)
            pos = np.flatnonzero(g.targets).tolist()
            nb = build_neighborhoods(g)
            assert all(u in nb[v].neighbors for v in pos for u in pos if u != v)
            G = nx.Graph(g.arcs.tolist())
            assert max(len(c) for c in nx.find_cliques(G)) == 3


def test_infeasible_spec():
    with pytest.raises(StructuralError):
        gen_subgraph_matching(SubgraphTaskSpec(target_size=9))


def test_karate_against_networkx():
    g = load_karate()
    ref = nx.karate_club_graph()
    assert g.node_count == 34 and len(set(KARATE_CLASSES)) == 4
    assert len(g.arcs) == 2 * ref.number_of_edges() == 156
    ours = {tuple(sorted(a)) for a in g.arcs.tolist()}
    assert ours == {tuple(sorted(e)) for e in ref.edges()}
    deg = g.topology.degree
    assert [int(d) for d in deg] == [ref.degree(v) for v in range(34)]
    assert _bidirectional(g)


def test_karate_classes_are_a_high_modularity_partition():
    ref = nx.karate_club_graph()
    comms = [{v for v in range(34) if KARATE_CLASSES[v] == c} for c in range(4)]
    assert nx.community.modularity(ref, comms, weight=None) == pytest.approx(0.4198, abs=1e-4)


def test_degree_features():
    g = Graph.from_edges(3, [(0, 1)])
    f = one_hot_degree_features(g, 2).node_features
    assert f[2].tolist() == [1.0, 0.0, 0.0]
    np.testing.assert_array_equal(f.sum(axis=1), 1.0)
    k = load_karate("degree")
    hub = int(np.argmax(k.topology.degree))
    recount = sum(1 for a, b in load_karate().arcs.tolist() if a == hub)
    assert k.node_features[hub].argmax() == recount
    with pytest.raises(StructuralError):
        one_hot_degree_features(load_karate(), 3)


def test_scale_features():
    tr, _, _ = gen_subgraph_matching(SubgraphTaskSpec(num_graphs=3))
    s = scale_features(tr, 0.1)
    np.testing.assert_allclose(s.merged.node_features, 0.1 * tr.merged.node_features)
    np.testing.assert_array_equal(s.merged.arcs, tr.merged.arcs)


def test_round_trip(tmp_path):
    for b in gen_subgraph_matching(SubgraphTaskSpec(num_graphs=10, seed=3)):
        p = tmp_path / "x.txt"
        write_dataset_file(p, b)
        text = p.read_bytes()
        write_dataset_file(tmp_path / "y.txt", load_dataset_file(p))
        assert (tmp_path / "y.txt").read_bytes() == text
        again = load_dataset_file(p).merged
        np.testing.assert_array_equal(again.node_features, b.merged.node_features)


def test_empty_file(tmp_path):
    p = tmp_path / "e.txt"
    write_dataset_file(p, [])
    assert len(load_dataset_file(p)) == 0


def test_fixture_counts():
    batch, kind = read_dataset_file(FIXTURE)
    assert kind == "node" and len(batch) == 2
    a, b = batch.graphs
    assert (a.node_count, len(a.arcs), b.node_count, len(b.arcs)) == (3, 4, 2, 1)
    assert a.targets.tolist() == [1, 0, -1] and a.supervised.sum() == 2
    assert b.graph_target == 1 and not b.supervised.any()
    assert batch.merged.node_count == 5 and len(batch.merged.arcs) == 5
    assert a.arc_features[2, 0] == 0.5


@pytest.mark.parametrize("edit,line", [
    (lambda t: t.replace("lpgnn-dataset 1", "nope 1"), 1),
    (lambda t: t.replace("node 0 1 -1.0", "node 0 1 abc"), 10),
    (lambda t: t.replace("arc 1 2 0.5", "arc 1 2"), 14),
    (lambda t: t.replace("node - 0 2.25", "node - 2 2.25"), 11),
])
def test_parse_errors_carry_line(tmp_path, edit, line):
    p = tmp_path / "bad.txt"
    p.write_text(edit(FIXTURE.read_text()))
    with pytest.raises(ParseError) as info:
        load_dataset_file(p)
    assert info.value.lineno == line


def test_union_round_trip(tmp_path):
    g = load_karate("degree")
    p = tmp_path / "k.txt"
    write_dataset_file(p, disjoint_union([g]))
    back = load_dataset_file(p).merged
    np.testing.assert_array_equal(back.arcs, g.arcs)
    np.testing.assert_array_equal(back.targets, g.targets)
