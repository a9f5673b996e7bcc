"""Checkpoint files.

A checkpoint is a numpy ``.npz`` archive.  Entries:

    __magic__     "lpgnn-checkpoint"
    __version__   format version (currently 1)
    __meta__      JSON: config, config hash, layer descriptions, readout sizes
                  and activations, task/loss/constraint settings, optimizer
                  hyperparameters and step counts
    param/<name>  network weights, keys as in ``LpModel.parameters()``
    state/<k>     states of layer k (optional)
    lambda/<k>    multipliers of layer k (optional)
    opt/<group>/m/<key>, opt/<group>/v/<key>   Adam moments (optional)

All arrays are stored as little-endian float64 ('<f8').
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .aggregators import GcnAggregator, GinAggregator, PairwiseAggregator
from .constraints import ConstraintFn
from .errors import StructuralError
from .model import LpModel, TrainConfig
from .ndmath import Adam, Mlp

MAGIC = "lpgnn-checkpoint"
VERSION = 1
DTYPE = np.dtype("<f8")


def _mlp_meta(net: Mlp) -> dict:
    return {"layer_sizes": list(net.layer_sizes), "activations": list(net.activations)}


def _layer_meta(agg) -> dict:
    meta = {"kind": agg.kind, "state_dim": agg.state_dim, "label_dim": agg.label_dim,
            "arc_dim": agg.arc_dim,
            "networks": {name: _mlp_meta(net) for name, net in agg.networks().items()}}
    if isinstance(agg, PairwiseAggregator):
        meta.update(neighbor_labels=agg.neighbor_labels, self_state=agg.self_state)
    elif isinstance(agg, GinAggregator):
        meta["eps"] = agg.eps
    return meta


def _blank_mlp(meta: dict) -> Mlp:
    sizes = meta["layer_sizes"]
    return Mlp(sizes, [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
               [np.zeros(b) for b in sizes[1:]], meta["activations"])


def _build_layer(meta: dict):
    nets = {name: _blank_mlp(m) for name, m in meta["networks"].items()}
    s, m, d = meta["state_dim"], meta["label_dim"], meta["arc_dim"]
    kind = meta["kind"]
    if kind in ("sum", "avg"):
        return PairwiseAggregator(nets["h"], s, m, d, mean=kind == "avg",
                                  neighbor_labels=meta["neighbor_labels"],
                                  self_state=meta.get("self_state", True))
    if kind == "gin":
        return GinAggregator(nets["h"], s, m, d, meta["eps"])
    if kind == "gcn":
        return GcnAggregator(nets["h_self"], nets["h_nbr"], s, m, d)
    raise StructuralError(f"checkpoint names unknown aggregator {kind!r}")


def save_checkpoint(path, model: LpModel, cfg: TrainConfig | None = None, states=None,
                    multipliers=None, optimizers: dict[str, Adam] | None = None,
                    extra: dict | None = None) -> Path:
    path = Path(path)
    meta = {
        "config": None if cfg is None else cfg.to_dict(),
        "config_hash": None if cfg is None else cfg.digest(),
        "layers": [_layer_meta(a) for a in model.layers],
        "readout": _mlp_meta(model.readout),
        "constraint": {"variant": model.constraint.variant, "epsilon": model.constraint.epsilon},
        "task": model.task, "loss": model.loss, "multiplier_mode": model.multiplier_mode,
        "detach_layers": model.detach_layers, "loss_reduction": model.loss_reduction,
        "optimizers": {},
        "extra": extra or {},
    }
    arrays = {"__magic__": np.array(MAGIC), "__version__": np.array(VERSION)}
    for name, p in model.parameters().items():
        arrays[f"param/{name}"] = np.asarray(p, dtype=DTYPE)
    for k, x in enumerate(states or []):
        arrays[f"state/{k}"] = np.asarray(x, dtype=DTYPE)
    for k, lam in enumerate(multipliers or []):
        arrays[f"lambda/{k}"] = np.asarray(lam, dtype=DTYPE)
    for group, opt in (optimizers or {}).items():
        sd = opt.state_dict()
        meta["optimizers"][group] = {k: sd[k] for k in ("lr", "beta1", "beta2", "eps", "t")}
        for which in ("m", "v"):
            for key, arr in sd[which].items():
                arrays[f"opt/{group}/{which}/{key}"] = np.asarray(arr, dtype=DTYPE)
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


class Checkpoint:
    """Everything read back from a checkpoint file."""

    def __init__(self, model, cfg, states, multipliers, optimizers, meta):
        self.model = model
        self.config = cfg
        self.states = states
        self.multipliers = multipliers
        self.optimizers = optimizers
        self.meta = meta


def _indexed(arrays: dict, prefix: str) -> list[np.ndarray]:
    keys = sorted((int(k[len(prefix):]), k) for k in arrays if k.startswith(prefix))
    return [arrays[k] for _, k in keys]


def load_checkpoint(path) -> Checkpoint:
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as exc:
        raise StructuralError(f"{path}: not a readable checkpoint ({exc})") from exc
    if "__magic__" not in arrays or str(arrays["__magic__"]) != MAGIC:
        raise StructuralError(f"{path}: bad magic, not an lpgnn checkpoint")
    version = int(arrays["__version__"])
    if version != VERSION:
        raise StructuralError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(str(arrays["__meta__"]))

    layers = [_build_layer(m) for m in meta["layers"]]
    model = LpModel(layers, _blank_mlp(meta["readout"]),
                    ConstraintFn(meta["constraint"]["variant"], meta["constraint"]["epsilon"]),
                    meta["task"], meta["loss"], meta["multiplier_mode"], meta["detach_layers"],
                    loss_reduction=meta.get("loss_reduction", "sum"))
    for name, p in model.parameters().items():
        key = f"param/{name}"
        if key not in arrays or arrays[key].shape != p.shape:
            raise StructuralError(f"{path}: missing or misshapen weight {name}")
        p[...] = arrays[key]

    cfg = None if meta["config"] is None else TrainConfig.from_dict(meta["config"])
    if cfg is not None and meta["config_hash"] != cfg.digest():
        raise StructuralError(f"{path}: config hash mismatch")
    optimizers = {}
    for group, hp in meta["optimizers"].items():
        opt = Adam(hp["lr"], hp["beta1"], hp["beta2"], hp["eps"])
        sd = dict(hp, m={}, v={})
        for which in ("m", "v"):
            prefix = f"opt/{group}/{which}/"
            sd[which] = {k[len(prefix):]: a for k, a in arrays.items() if k.startswith(prefix)}
        opt.load_state_dict(sd)
        optimizers[group] = opt
    return Checkpoint(model, cfg, _indexed(arrays, "state/"), _indexed(arrays, "lambda/"),
                      optimizers, meta)
