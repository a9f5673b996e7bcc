import dataclasses

import numpy as np
import pytest

from lpgnn.datasets import SubgraphTaskSpec, gen_subgraph_matching, load_karate
from lpgnn.graph import Graph, disjoint_union
from lpgnn.model import LpModel, TrainConfig
from lpgnn.trainer import (METRIC_FIELDS, TrainingDiverged, evaluate, infer_states, predict,
                           train)


@pytest.fixture(scope="module")
def small_subgraph():
    tr, va, _ = gen_subgraph_matching(SubgraphTaskSpec(num_graphs=15, seed=1))
    return tr, va


def test_zero_epochs(small_subgraph):
    tr, _ = small_subgraph
    cfg = TrainConfig(epochs=0)
    model = LpModel.build(cfg, 1, 0, 2)
    before = {k: v.copy() for k, v in model.parameters().items()}
    res = train(model, tr, cfg)
    assert res.history == []
    for k, v in model.parameters().items():
        np.testing.assert_array_equal(v, before[k])
    assert all(np.all(x == 0) for x in res.states + res.multipliers)


def test_history_fields_and_determinism(small_subgraph):
    tr, va = small_subgraph
    cfg = TrainConfig(layers=2, state_dims=(4,), epochs=40, eval_every=20, dropout=0.3, seed=5)
    runs = [train(LpModel.build(cfg, 1, 0, 2), tr, cfg, val=va) for _ in range(2)]
    assert list(runs[0].history[0]) == list(METRIC_FIELDS)
    assert len(runs[0].history) == 40
    a, b = (np.array([[r[k] for k in METRIC_FIELDS] for r in run.history]) for run in runs)
    assert a.tobytes() == b.tobytes()


def test_training_reduces_lagrangian_loss():
    g = load_karate("degree")
    cfg = TrainConfig(epochs=300)
    res = train(LpModel.build(cfg, g.feature_dim, 0, 4), g, cfg)
    assert res.history[-1]["loss"] < 0.5 * res.history[0]["loss"]


def test_zero_output_h_inference():
    g = load_karate()
    cfg = TrainConfig(state_dims=(3,))
    model = LpModel.build(cfg, 0, 0, 4)
    for p in model.layers[0].parameters().values():
        p[...] = 0
    inf = infer_states(model, g, cfg)
    assert inf.converged and inf.iterations == 0 and inf.max_residual == 0
    assert all(np.all(x == 0) for x in inf.states)


def test_budget_zero_is_zero_state_readout():
    g = load_karate("degree")
    cfg = TrainConfig(epochs=50)
    model = LpModel.build(cfg, g.feature_dim, 0, 4)
    train(model, g, cfg)
    ev = evaluate(model, g, cfg, budget=0)
    zero = predict(model, g, model.zero_states(34))
    np.testing.assert_array_equal(ev.probabilities, zero)
    assert ev.iterations == 0


def test_softmax_sums_to_one(small_subgraph):
    tr, _ = small_subgraph
    cfg = TrainConfig(epochs=5)
    model = LpModel.build(cfg, 1, 0, 2)
    res = train(model, tr, cfg)
    np.testing.assert_allclose(predict(model, tr, res.states).sum(axis=1), 1.0)


def test_graph_readout_single_node():
    g = Graph.from_edges(1, [(0, 0)], undirected=False, node_features=np.ones((1, 2)),
                         graph_target=1)
    cfg = TrainConfig(task="graph", state_dims=(3,))
    model = LpModel.build(cfg, 2, 0, 2)
    X = [np.random.default_rng(0).normal(size=(1, 3))]
    F, _ = model.layers[0].forward(g.topology, X[0], g.node_features)
    logits, _ = model.readout.forward(F)
    e = np.exp(logits - logits.max())
    np.testing.assert_allclose(predict(model, g, X), e / e.sum(), atol=1e-12)


def test_graph_task_trains():
    rng = np.random.default_rng(0)
    gs = []
    for i in range(20):
        n = 3 + i % 3
        gs.append(Graph.from_edges(n, [(j, j + 1) for j in range(n - 1)],
                                   node_features=rng.normal(size=(n, 1)), graph_target=n % 2))
    batch = disjoint_union(gs)
    cfg = TrainConfig(task="graph", epochs=100)
    res = train(LpModel.build(cfg, 1, 0, 2), batch, cfg)
    assert np.isfinite(res.history[-1]["loss"])


def test_divergence_keeps_last_good(small_subgraph):
    tr, _ = small_subgraph
    cfg = TrainConfig(epochs=20)
    model = LpModel.build(cfg, 1, 0, 2)
    def poison(epoch, m, X, Lam):
        if epoch == 7:
            X[0][0, 0] = np.inf
    with pytest.raises(TrainingDiverged) as info:
        train(model, tr, cfg, callback=poison)
    good = info.value.last_good
    assert len(good.history) == 7
    assert all(np.all(np.isfinite(p)) for p in good.model.parameters().values())


def test_patience_stops_early(small_subgraph):
    tr, va = small_subgraph
    # patience counts epochs since the last validation improvement; with
    # evaluations every 10 epochs and patience 0 the run stops right after epoch 1
    cfg = TrainConfig(epochs=2000, eval_every=10, patience=0)
    res = train(LpModel.build(cfg, 1, 0, 2), tr, cfg, val=va)
    assert res.stopped_early and len(res.history) == 2
    assert res.best_epoch == 0


def test_inference_ignores_dropout(small_subgraph):
    tr, _ = small_subgraph
    cfg = TrainConfig(epochs=20, dropout=0.7)
    model = LpModel.build(cfg, 1, 0, 2)
    train(model, tr, cfg)
    a, b = evaluate(model, tr, cfg, budget=50), evaluate(model, tr, cfg, budget=50)
    np.testing.assert_array_equal(a.probabilities, b.probabilities)


def test_infer_on_training_graph_matches_training_predictions():
    # frozen weights, fresh zero states: inference should land on the trained states
    g = load_karate("degree")
    cfg = TrainConfig(epochs=2000, aggregator="avg", lr_x=1e-3)
    model = LpModel.build(cfg, g.feature_dim, 0, 4)
    res = train(model, g, cfg)
    inf = infer_states(model, g, cfg, budget=20000, tolerance=1e-6)
    gap = np.abs(predict(model, g, res.states) - predict(model, g, inf.states)).max()
    assert gap <= 1e-3, f"class probabilities differ by {gap:.3g}"


def test_scalar_mode_trains(small_subgraph):
    tr, _ = small_subgraph
    cfg = TrainConfig(epochs=30, multiplier_mode="scalar")
    res = train(LpModel.build(cfg, 1, 0, 2), tr, cfg)
    assert res.multipliers[0].shape == (tr.node_count, 1)


def test_detached_layers_train(small_subgraph):
    tr, _ = small_subgraph
    cfg = TrainConfig(layers=2, epochs=30, detach_layers=True)
    res = train(LpModel.build(cfg, 1, 0, 2), tr, cfg)
    assert np.isfinite(res.history[-1]["lagrangian"])


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(layers=2, state_dims=(3, 4, 5))
    with pytest.raises(ValueError):
        TrainConfig(constraint="nope")
    with pytest.raises(ValueError):
        TrainConfig(loss_reduction="max")
    cfg = TrainConfig(layers=3, state_dims=(4,))
    assert cfg.state_dims == (4, 4, 4)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    assert dataclasses.replace(cfg, seed=1).digest() != cfg.digest()
