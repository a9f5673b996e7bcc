import json

import numpy as np
import pytest

from lpgnn.cli import EXIT_OK, EXIT_STRUCTURAL, EXIT_USAGE, main
from lpgnn.trainer import METRIC_FIELDS

KARATE = ["--task", "karate", "--layers", "3", "--state-dims", "10,10,2", "--g", "abs"]


def _kv(line):
    return dict(tok.split("=", 1) for tok in line.split() if "=" in tok)


def test_train_karate_artifacts(tmp_path, capsys):
    out = tmp_path / "k"
    assert main(["train", *KARATE, "--epochs", "200", "--out", str(out)]) == EXIT_OK
    for name in ("checkpoint.npz", "metrics.tsv", "manifest.json"):
        assert (out / name).exists()
    lines = (out / "metrics.tsv").read_text().splitlines()
    assert lines[0].split("\t") == list(METRIC_FIELDS) and len(lines) == 201
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["state_dims"] == [10, 10, 2] and man["dataset"]["generator"] == "karate"
    assert "train_acc=" in capsys.readouterr().out


def test_zero_epochs(tmp_path):
    out = tmp_path / "z"
    assert main(["train", *KARATE, "--epochs", "0", "--out", str(out)]) == EXIT_OK
    assert (out / "checkpoint.npz").exists()
    assert (out / "metrics.tsv").read_text().splitlines() == ["\t".join(METRIC_FIELDS)]


def test_missing_dataset(tmp_path, capsys):
    code = main(["train", "--data", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "o")])
    assert code == EXIT_USAGE
    assert "not found" in capsys.readouterr().err


def test_bad_flags(tmp_path):
    assert main(["train", *KARATE[:4], "--state-dims", "1,2", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["train", "--g"]) == EXIT_USAGE


def test_manifests_identical_but_for_timing(tmp_path):
    mans = []
    for i in range(2):
        out = tmp_path / str(i)
        main(["train", *KARATE, "--epochs", "30", "--seed", "3", "--out", str(out)])
        m = json.loads((out / "manifest.json").read_text())
        m["final"].pop("train_time_s")
        m.pop("timings", None)
        mans.append(m)
        assert (out / "metrics.tsv").read_text() == (tmp_path / "0" / "metrics.tsv").read_text()
    assert mans[0] == mans[1]


@pytest.fixture(scope="module")
def subgraph_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("sub")
    assert main(["gen-data", "--task", "subgraph", "--seed", "0", "--out", str(root / "d")]) == 0
    main(["train", "--data", str(root / "d" / "train.txt"), "--epochs", "4000",
          "--aggregator", "avg", "--lr-x", "1e-3", "--loss-reduction", "mean",
          "--no-self-state", "--out", str(root / "r")])
    return root


def test_eval_on_train_is_self_consistent(subgraph_run, capsys):
    man = json.loads((subgraph_run / "r" / "manifest.json").read_text())
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(subgraph_run / "r" / "checkpoint.npz"),
                 "--data", str(subgraph_run / "d" / "train.txt"), "--split", "train"]) == 0
    got = _kv(capsys.readouterr().out)
    assert abs(float(got["accuracy"]) - man["final"]["train_acc"]) <= 0.005


def test_eval_budget_zero(subgraph_run, capsys):
    from lpgnn.checkpoint import load_checkpoint
    from lpgnn.datasets import load_dataset_file
    from lpgnn.trainer import predict
    ck = load_checkpoint(subgraph_run / "r" / "checkpoint.npz")
    test = load_dataset_file(subgraph_run / "d" / "test.txt")
    zero = predict(ck.model, test, ck.model.zero_states(test.node_count)).argmax(axis=1)
    capsys.readouterr()
    main(["eval", "--checkpoint", str(subgraph_run / "r" / "checkpoint.npz"),
          "--data", str(subgraph_run / "d"), "--infer-budget", "0"])
    got = _kv(capsys.readouterr().out)
    assert got["iterations"] == "0"
    assert float(got["accuracy"]) == pytest.approx((zero == test.merged.targets).mean())


def test_eval_dimension_mismatch(subgraph_run):
    code = main(["eval", "--checkpoint", str(subgraph_run / "r" / "checkpoint.npz"),
                 "--task", "karate", "--features", "degree", "--split", "train"])
    assert code == EXIT_STRUCTURAL


def test_oracle_check(subgraph_run, capsys):
    capsys.readouterr()
    assert main(["oracle-check", "--checkpoint", str(subgraph_run / "r" / "checkpoint.npz"),
                 "--data", str(subgraph_run / "d" / "train.txt")]) == 0
    got = _kv(capsys.readouterr().out)
    assert float(got["disagreement"]) <= 1e-12


@pytest.mark.parametrize("g", ["abs", "squared"])
def test_gradcheck(g, capsys):
    assert main(["gradcheck", "--g", g, "--instances", "5"]) == 0
    first = capsys.readouterr().out
    main(["gradcheck", "--g", g, "--instances", "5"])
    assert capsys.readouterr().out == first


def test_gradcheck_default(capsys):
    assert main(["gradcheck"]) == 0


def test_dump_embeddings(tmp_path):
    out = tmp_path / "k"
    main(["train", *KARATE, "--aggregator", "avg", "--lr-x", "1e-3", "--epochs", "3000",
          "--trail-every", "500", "--out", str(out)])
    assert main(["dump-embeddings", "--trail", str(out), "--out", str(tmp_path / "e.tsv")]) == 0
    lines = (tmp_path / "e.tsv").read_text().splitlines()
    assert lines[0].split("\t") == ["epoch", "node", "x", "y", "true", "pred"]
    rows = [l.split("\t") for l in lines[1:]]
    epochs = sorted({int(r[0]) for r in rows})
    assert epochs == list(range(0, 3001, 500)) and len(rows) == len(epochs) * 34
    assert all(float(r[2]) == 0 and float(r[3]) == 0 for r in rows if r[0] == "0")
    last = [r for r in rows if int(r[0]) == 3000]
    assert np.mean([r[4] == r[5] for r in last]) >= 0.95


def test_dump_needs_2d(tmp_path):
    code = main(["train", "--task", "karate", "--state-dims", "3", "--epochs", "2",
                 "--trail-every", "1", "--out", str(tmp_path)])
    assert code == EXIT_STRUCTURAL


def test_grid_limit(tmp_path, capsys):
    assert main(["grid", "--task", "subgraph", "--num-graphs", "5", "--epochs", "3",
                 "--limit", "2", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "grid.tsv").read_text().splitlines()
    assert len(rows) == 3
