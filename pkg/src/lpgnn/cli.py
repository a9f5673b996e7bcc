"""Command-line interface.

    lpgnn gen-data --task {subgraph,clique} --seed N --out DIR
    lpgnn train (--task {karate,subgraph,clique} | --data PATH) [options] --out DIR
    lpgnn eval --checkpoint CKPT [--task ... | --data PATH] [--split test]
    lpgnn gradcheck [--g abs] [--layers 2] [--instances 20]
    lpgnn oracle-check --checkpoint CKPT [--task ... | --data PATH] [--split train]
    lpgnn dump-embeddings --trail TRAIL --out FILE
    lpgnn grid --task subgraph --out DIR [--limit N]

Exit codes:
    0  success
    1  a check failed (gradcheck above 1e-4, oracle disagreement)
    2  usage error (bad flags, missing files)
    3  structural error (dimension mismatch, malformed data)
    4  numerical error (non-finite values, training diverged)

Text outputs are tab-separated with a header row:
    metrics.tsv   epoch loss lagrangian max_residual mean_residual train_acc val_acc
    embeddings    epoch node x y true pred
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .datasets import (CliqueTaskSpec, SubgraphTaskSpec, gen_clique, gen_subgraph_matching,
                       scale_features,
                       load_karate, read_dataset_file, write_dataset_file)
from .errors import NumericalError, ParseError, StructuralError
from .gradcheck import BLOCKS, check_gradients, random_instance
from .graph import GraphBatch
from .lagrangian import lagrangian_gradients
from .model import SEARCH_GRID, LpModel, TrainConfig
from .oracle import FixedPointRun, fixed_point_iterate, oracle_residual
from .trainer import METRIC_FIELDS, TrainingDiverged, evaluate, predict, train

log = logging.getLogger("lpgnn")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_STRUCTURAL, EXIT_NUMERICAL = 0, 1, 2, 3, 4
GRADCHECK_THRESHOLD = 1e-4
SPLITS = ("train", "val", "test")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ datasets

def _split_files(path: Path) -> dict[str, Path]:
    if path.is_dir():
        found = {s: path / f"{s}.txt" for s in SPLITS if (path / f"{s}.txt").exists()}
        if "train" not in found:
            raise UsageError(f"{path}: no train.txt in dataset directory")
        return found
    if not path.exists():
        raise UsageError(f"dataset not found: {path}")
    return {"train": path}


def load_splits(args) -> tuple[dict, str, dict]:
    """Resolve ``--task``/``--data`` into ``({split: data}, task_kind, identity)``."""
    task = getattr(args, "task", None)
    data = getattr(args, "data", None)
    if data is not None:
        splits, kinds = {}, set()
        for name, p in _split_files(Path(data)).items():
            batch, kind = read_dataset_file(p)
            splits[name] = batch
            kinds.add(kind)
        if len(kinds) != 1:
            raise StructuralError("dataset splits disagree on the task kind")
        return splits, kinds.pop(), {"path": str(Path(data).resolve())}
    if task == "karate":
        g = load_karate(getattr(args, "features", "none"))
        return {"train": g}, "node", {"generator": "karate",
                                      "features": getattr(args, "features", "none")}
    if task in ("subgraph", "clique"):
        seed = args.data_seed if getattr(args, "data_seed", None) is not None else args.seed
        kw = {"seed": seed}
        if getattr(args, "num_graphs", None):
            kw["num_graphs"] = args.num_graphs
        spec = SubgraphTaskSpec(**kw) if task == "subgraph" else CliqueTaskSpec(**kw)
        gen = gen_subgraph_matching if task == "subgraph" else gen_clique
        scale = getattr(args, "feature_scale", 1.0)
        splits = [scale_features(b, scale) if scale != 1.0 else b for b in gen(spec)]
        return dict(zip(SPLITS, splits)), "node", {"generator": task, **vars(spec),
                                                   "feature_scale": scale}
    raise UsageError("give --data PATH or --task {karate,subgraph,clique}")


def _n_outputs(batch, kind: str) -> int:
    g = batch.merged if isinstance(batch, GraphBatch) else batch
    if kind == "graph":
        t = np.asarray(batch.graph_targets if isinstance(batch, GraphBatch) else [g.graph_target])
        return int(t.max()) + 1
    if g.targets is None:
        raise StructuralError("training data carries no node targets")
    if g.targets.dtype.kind == "f":
        return g.targets.shape[1]
    return int(g.targets.max()) + 1


def _dims(batch):
    g = batch.merged if isinstance(batch, GraphBatch) else batch
    return g.feature_dim, g.arc_feature_dim


# ------------------------------------------------------------------ helpers

def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def config_from_args(args, task_kind: str = "node", loss: str = "xent") -> TrainConfig:
    layers = args.layers
    dims = args.state_dims
    if len(dims) not in (1, layers):
        raise UsageError(f"--state-dims needs 1 or {layers} values, got {len(dims)}")
    try:
        return TrainConfig(
            layers=layers, state_dims=dims, hidden=args.hidden,
            readout_hidden=args.readout_hidden, aggregator=args.aggregator,
            constraint=args.g, eps=args.eps, multiplier_mode=args.multiplier_mode,
            detach_layers=args.detach_layers, dropout=args.dropout, lr_theta=args.lr_theta,
            lr_x=args.lr_x, lr_lambda=args.lr_lambda, epochs=args.epochs, seed=args.seed,
            patience=args.patience, eval_every=args.eval_every, infer_budget=args.infer_budget,
            tolerance=args.tolerance, task=task_kind, loss=loss,
            loss_reduction=args.loss_reduction, h_output=args.h_output,
            self_state=not args.no_self_state)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else repr(v))
    return str(v)


def write_metrics(path: Path, history: list[dict]) -> None:
    with open(path, "w") as fh:
        fh.write("\t".join(METRIC_FIELDS) + "\n")
        for row in history:
            fh.write("\t".join(_fmt(row[k]) for k in METRIC_FIELDS) + "\n")


def _loss_kind(batch, kind):
    g = batch.merged if isinstance(batch, GraphBatch) else batch
    if kind == "node" and g.targets is not None and g.targets.dtype.kind == "f":
        return "mse"
    return "xent"


def _eval_summary(ev) -> dict:
    return {"accuracy": ev.accuracy, "loss": ev.loss, "max_residual": ev.max_residual,
            "mean_residual": ev.mean_residual, "converged": ev.converged,
            "iterations": ev.iterations}


# ------------------------------------------------------------------ commands

def cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits, kind, ident = load_splits(args)
    for name, batch in splits.items():
        write_dataset_file(out / f"{name}.txt", batch, kind)
    (out / "dataset.json").write_text(json.dumps(ident, indent=2, sort_keys=True) + "\n")
    print(f"wrote {', '.join(f'{s}.txt' for s in splits)} to {out}")
    return EXIT_OK


def _train_once(args, cfg, splits, kind, ident, out: Path) -> dict:
    tr = splits["train"]
    m, d = _dims(tr)
    model = LpModel.build(cfg, m, d, _n_outputs(tr, kind))
    val = splits.get("val")

    trail_every = getattr(args, "trail_every", 0) or 0
    trail = {"epochs": [], "states": [], "pred": []}
    if trail_every and model.state_dims[-1] != 2:
        raise StructuralError("an embedding trail needs a 2-D last layer; "
                              "set the last --state-dims entry to 2")

    def record(epoch, mdl, X, Lam):
        if epoch % trail_every == 0 or epoch == cfg.epochs:
            trail["epochs"].append(epoch)
            trail["states"].append(X[-1].copy())
            trail["pred"].append(mdl.readout.forward(X[-1])[0].argmax(axis=1))

    t0 = time.perf_counter()
    try:
        result = train(model, tr, cfg, val=val, callback=record if trail_every else None)
    except TrainingDiverged as exc:
        last = exc.last_good
        save_checkpoint(out / "checkpoint.npz", last.model, cfg, last.states, last.multipliers)
        write_metrics(out / "metrics.tsv", last.history)
        raise
    train_time = time.perf_counter() - t0

    save_checkpoint(out / "checkpoint.npz", result.model, cfg, result.states,
                    result.multipliers, result.optimizers)
    write_metrics(out / "metrics.tsv", result.history)
    if trail_every:
        g = tr.merged if isinstance(tr, GraphBatch) else tr
        np.savez(out / "trail.npz", epochs=np.array(trail["epochs"]),
                 states=np.array(trail["states"]), pred=np.array(trail["pred"]),
                 targets=np.asarray(g.targets))

    final = {"train_time_s": train_time, "best_epoch": result.best_epoch,
             "stopped_early": result.stopped_early}
    if result.history:
        # score the saved (possibly best-validation) weights on their own states
        ev = evaluate(result.model, tr, cfg, states=result.states)
        final.update(train_acc=ev.accuracy, train_loss=ev.loss,
                     train_max_residual=ev.max_residual)
    for name in ("val", "test"):
        if name in splits:
            t1 = time.perf_counter()
            final[name] = _eval_summary(evaluate(result.model, splits[name], cfg))
            final[name]["time_s"] = time.perf_counter() - t1
    manifest = {"lpgnn_version": __version__, "config": cfg.to_dict(),
                "config_hash": cfg.digest(), "dataset": ident, "task_kind": kind,
                "final": final, "argv": sys.argv[1:],
                "created": time.strftime("%Y-%m-%dT%H:%M:%S")}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True,
                                                  default=_fmt) + "\n")
    return final


def cmd_train(args) -> int:
    splits, kind, ident = load_splits(args)
    cfg = config_from_args(args, kind, _loss_kind(splits["train"], kind))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    final = _train_once(args, cfg, splits, kind, ident, out)
    line = [f"train_acc={_fmt(final.get('train_acc', math.nan))}",
            f"train_max_residual={_fmt(final.get('train_max_residual', math.nan))}"]
    for name in ("val", "test"):
        if name in final:
            line.append(f"{name}_acc={_fmt(final[name]['accuracy'])}")
            line.append(f"{name}_max_residual={_fmt(final[name]['max_residual'])}")
    print(" ".join(line))
    print(f"artifacts in {out}")
    return EXIT_OK


def _checkpoint_config(ck, args) -> TrainConfig:
    cfg = ck.config or TrainConfig()
    over = {}
    if args.infer_budget is not None:
        over["infer_budget"] = args.infer_budget
    if args.tolerance is not None:
        over["tolerance"] = args.tolerance
    return TrainConfig.from_dict({**cfg.to_dict(), **over}) if over else cfg


def cmd_eval(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    cfg = _checkpoint_config(ck, args)
    splits, _, _ = load_splits(args)
    if args.split not in splits:
        raise UsageError(f"split {args.split!r} not available (have {', '.join(splits)})")
    data = splits[args.split]
    ev = evaluate(ck.model, data, cfg)
    res = lagrangian_gradients(ck.model, data, _inferred(ck.model, data, cfg),
                               ck.model.zero_multipliers(_node_count(data)), include_loss=False)
    unconverged = int(sum((np.abs(r).max(axis=1) > cfg.tolerance).sum()
                          for r in res.residuals))
    print(f"split={args.split} accuracy={_fmt(ev.accuracy)} loss={_fmt(ev.loss)} "
          f"mean_residual={_fmt(ev.mean_residual)} max_residual={_fmt(ev.max_residual)} "
          f"iterations={ev.iterations} converged={ev.converged} "
          f"convergence_warnings={unconverged}")
    return EXIT_OK


def _node_count(data):
    return (data.merged if isinstance(data, GraphBatch) else data).node_count


def _inferred(model, data, cfg):
    from .trainer import infer_states
    return infer_states(model, data, cfg).states


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = dict.fromkeys(BLOCKS, 0.0)
    aggs = [args.aggregator] if args.aggregator else ["sum", "avg"]
    for i in range(args.instances):
        inst = random_instance(rng, layers=args.layers, aggregator=aggs[i % len(aggs)],
                               constraint=args.g, eps=args.eps,
                               multiplier_mode=args.multiplier_mode)
        for block, err in check_gradients(inst).items():
            worst[block] = max(worst[block], err)
    print("block\tworst_relative_error")
    for block in BLOCKS:
        print(f"{block}\t{worst[block]:.3e}")
    ok = all(e <= GRADCHECK_THRESHOLD for e in worst.values())
    print("PASS" if ok else f"FAIL (threshold {GRADCHECK_THRESHOLD:g})")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_oracle_check(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    cfg = _checkpoint_config(ck, args)
    splits, _, _ = load_splits(args)
    data = splits[args.split]
    n = _node_count(data)
    if args.split == "train" and ck.states and ck.states[0].shape[0] == n:
        states, source = ck.states, "checkpoint"
    else:
        states, source = _inferred(ck.model, data, cfg), "inferred"
    oracle = oracle_residual(ck.model, data, states)
    lp = lagrangian_gradients(ck.model, data, states, ck.model.zero_multipliers(n),
                              include_loss=False)
    lp_norms = [np.abs(r).max(axis=1) for r in lp.residuals]
    disagreement = max(float(np.abs(a - b).max()) for a, b in zip(oracle, lp_norms))
    run = FixedPointRun(max_iterations=args.iterations, tolerance=0.0)
    moved, _, _ = fixed_point_iterate(ck.model, data, run, init=states)
    drift = max(float(np.abs(a - b).max()) for a, b in zip(moved, states))
    omax = max(float(r.max()) for r in oracle)
    omean = float(np.mean(np.concatenate(oracle)))
    print(f"states={source} nodes={n} oracle_max_residual={omax:.6g} "
          f"oracle_mean_residual={omean:.6g} lp_max_residual={lp.max_residual:.6g} "
          f"disagreement={disagreement:.3g} drift_{args.iterations}={drift:.6g}")
    return EXIT_OK if disagreement <= 1e-9 else EXIT_CHECK


def cmd_dump_embeddings(args) -> int:
    path = Path(args.trail)
    if path.is_dir():
        path = path / "trail.npz"
    if not path.exists():
        raise UsageError(f"trail not found: {path}")
    with np.load(path) as z:
        epochs, states, pred, targets = z["epochs"], z["states"], z["pred"], z["targets"]
    if states.ndim != 3 or states.shape[2] != 2:
        raise StructuralError("embedding dumps need a 2-D last layer; "
                              "retrain with the last --state-dims entry set to 2")
    lines = ["epoch\tnode\tx\ty\ttrue\tpred"]
    for e, X, p in zip(epochs, states, pred):
        for v in range(X.shape[0]):
            lines.append(f"{int(e)}\t{v}\t{float(X[v, 0])!r}\t{float(X[v, 1])!r}\t{int(targets[v])}\t{int(p[v])}")
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
        print(f"wrote {len(lines) - 1} rows to {args.out}")
    return EXIT_OK


def cmd_grid(args) -> int:
    splits, kind, ident = load_splits(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    keys = list(SEARCH_GRID)
    cells = list(itertools.product(*(SEARCH_GRID[k] for k in keys)))
    if args.limit:
        cells = cells[:args.limit]
    summary = ["cell\t" + "\t".join(keys) + "\tval_acc\ttest_acc"]
    for i, values in enumerate(cells):
        cell = dict(zip(keys, values))
        args.state_dims = (cell["state_dim"],)
        args.dropout, args.aggregator = cell["dropout"], cell["aggregator"]
        args.hidden = (cell["hidden"],)
        args.lr_theta, args.lr_x, args.lr_lambda = cell["lr_theta"], cell["lr_x"], cell["lr_x"]
        cfg = config_from_args(args, kind, _loss_kind(splits["train"], kind))
        cdir = out / f"cell{i:03d}"
        cdir.mkdir(exist_ok=True)
        final = _train_once(args, cfg, splits, kind, ident, cdir)
        va = final.get("val", {}).get("accuracy", math.nan)
        te = final.get("test", {}).get("accuracy", math.nan)
        summary.append(f"{i}\t" + "\t".join(str(v) for v in values) + f"\t{_fmt(va)}\t{_fmt(te)}")
        print(summary[-1], flush=True)
    (out / "grid.tsv").write_text("\n".join(summary) + "\n")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _add_data(p, splits=False):
    p.add_argument("--task", choices=["karate", "subgraph", "clique"])
    p.add_argument("--data", help="dataset file, or directory with train/val/test.txt")
    p.add_argument("--data-seed", type=int, help="generator seed (defaults to --seed)")
    p.add_argument("--num-graphs", type=int, help="graphs per split for generated tasks")
    p.add_argument("--features", choices=["none", "degree"], default="none",
                   help="karate node features")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-scale", type=float, default=1.0,
                   help="multiply generated node features by this factor")
    if splits:
        p.add_argument("--split", choices=SPLITS, default="test")


def _add_model(p):
    p.add_argument("--aggregator", choices=["sum", "avg", "gin", "gcn"], default="sum")
    p.add_argument("--g", default="abs", help="constraint: lin, lin_eps, abs, abs_eps, squared")
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--state-dims", type=_int_list, default=(5,))
    p.add_argument("--hidden", type=_int_list, default=(20,))
    p.add_argument("--readout-hidden", type=_int_list, default=())
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--lr-theta", type=float, default=1e-3)
    p.add_argument("--lr-x", type=float, default=1e-2)
    p.add_argument("--lr-lambda", type=float, default=1e-2)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--patience", type=int)
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--infer-budget", type=int, default=1000)
    p.add_argument("--tolerance", type=float, default=1e-2)
    p.add_argument("--multiplier-mode", choices=["vector", "scalar"], default="vector")
    p.add_argument("--detach-layers", action="store_true")
    p.add_argument("--loss-reduction", choices=["sum", "mean"], default="sum",
                   help="sum (default) or mean of the supervised loss over nodes")
    p.add_argument("--h-output", choices=["identity", "tanh"], default="identity")
    p.add_argument("--no-self-state", action="store_true",
                   help="drop x_v from the inputs of h")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpgnn", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a generated dataset to disk")
    p.add_argument("--task", choices=["subgraph", "clique"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-graphs", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model")
    _add_data(p)
    _add_model(p)
    p.add_argument("--trail-every", type=int, default=0,
                   help="record 2-D last-layer states every N epochs (for dump-embeddings)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="infer states on a split and score it")
    p.add_argument("--checkpoint", required=True)
    _add_data(p, splits=True)
    p.add_argument("--infer-budget", type=int)
    p.add_argument("--tolerance", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the Lagrangian gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--g", default="abs")
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--aggregator", choices=["sum", "avg", "gin", "gcn"])
    p.add_argument("--multiplier-mode", choices=["vector", "scalar"], default="vector")
    p.add_argument("--instances", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("oracle-check", help="cross-check residuals with the GNN* oracle")
    p.add_argument("--checkpoint", required=True)
    _add_data(p)
    p.add_argument("--split", choices=SPLITS, default="train")
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--infer-budget", type=int)
    p.add_argument("--tolerance", type=float)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("dump-embeddings", help="2-D state trail as a table")
    p.add_argument("--trail", required=True, help="trail.npz or the training output directory")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_dump_embeddings)

    p = sub.add_parser("grid", help="train every cell of the hyperparameter grid")
    _add_data(p)
    _add_model(p)
    p.add_argument("--limit", type=int, help="run only the first N cells")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lpgnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StructuralError, ParseError) as exc:
        print(f"lpgnn: structural error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURAL
    except NumericalError as exc:
        print(f"lpgnn: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"lpgnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
