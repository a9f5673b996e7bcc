"""Model container and training configuration."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .aggregators import Aggregator, make_aggregator
from .constraints import ConstraintFn
from .errors import StructuralError
from .ndmath import Mlp

#: hyperparameter grids of the artificial-task experiments
SEARCH_GRID = {
    "state_dim": [5, 10, 35],
    "dropout": [0.0, 0.7],
    "aggregator": ["sum", "avg"],
    "hidden": [5, 20, 50],
    "lr_theta": [1e-5, 1e-4, 1e-3],
    "lr_x": [1e-4, 1e-3, 1e-2],
}


@dataclass
class TrainConfig:
    layers: int = 1
    state_dims: tuple[int, ...] = (5,)
    hidden: tuple[int, ...] = (20,)
    readout_hidden: tuple[int, ...] = ()
    aggregator: str = "sum"
    constraint: str = "abs"
    eps: float = 0.0
    multiplier_mode: str = "vector"
    detach_layers: bool = False
    dropout: float = 0.0
    lr_theta: float = 1e-3
    lr_x: float = 1e-2
    lr_lambda: float = 1e-2
    epochs: int = 1000
    seed: int = 0
    patience: int | None = None
    eval_every: int = 100
    infer_budget: int = 1000
    tolerance: float = 1e-2
    task: str = "node"
    loss: str = "xent"
    loss_reduction: str = "sum"
    h_output: str = "identity"
    self_state: bool = True

    def __post_init__(self):
        self.state_dims = tuple(int(s) for s in self.state_dims)
        self.hidden = tuple(int(s) for s in self.hidden)
        self.readout_hidden = tuple(int(s) for s in self.readout_hidden)
        if len(self.state_dims) == 1 and self.layers > 1:
            self.state_dims = self.state_dims * self.layers
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if len(self.state_dims) != self.layers:
            raise ValueError(f"need {self.layers} state dims, got {len(self.state_dims)}")
        for name in ("lr_theta", "lr_x", "lr_lambda"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.multiplier_mode not in ("vector", "scalar"):
            raise ValueError("multiplier_mode must be 'vector' or 'scalar'")
        if self.task not in ("node", "graph"):
            raise ValueError("task must be 'node' or 'graph'")
        if self.loss not in ("xent", "mse"):
            raise ValueError("loss must be 'xent' or 'mse'")
        if self.loss_reduction not in ("sum", "mean"):
            raise ValueError("loss_reduction must be 'sum' or 'mean'")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.epochs < 0 or self.infer_budget < 0:
            raise ValueError("epochs and infer_budget must be nonnegative")
        ConstraintFn(self.constraint, self.eps)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v
                for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(eq=False)
class LpModel:
    """Per-layer transitions ``f^k_a``, a readout ``f_r`` and the constraint G.

    Layer 0 reads the node features as labels; layer ``k > 0`` reads
    ``x_{v,k-1}`` in the ``l_v`` slot.
    """

    layers: list[Aggregator]
    readout: Mlp
    constraint: ConstraintFn
    task: str = "node"
    loss: str = "xent"
    multiplier_mode: str = "vector"
    detach_layers: bool = False
    meta: dict = field(default_factory=dict)
    loss_reduction: str = "sum"

    def __post_init__(self):
        if not self.layers:
            raise StructuralError("a model needs at least one layer")
        for k in range(1, len(self.layers)):
            if self.layers[k].label_dim != self.layers[k - 1].state_dim:
                raise StructuralError(f"layer {k} label width must equal the state width "
                                      f"of layer {k - 1}")
        if self.readout.input_dim != self.layers[-1].state_dim:
            raise StructuralError("readout input width must equal the last state width")

    @classmethod
    def build(cls, cfg: TrainConfig, feature_dim: int, arc_dim: int, n_outputs: int,
              rng: np.random.Generator | None = None) -> "LpModel":
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        layers = []
        label_dim = feature_dim
        for k, s in enumerate(cfg.state_dims):
            layers.append(make_aggregator(
                cfg.aggregator, s, label_dim, arc_dim if k == 0 else 0, list(cfg.hidden), rng,
                neighbor_labels=k == 0, h_output_act=cfg.h_output,
                self_state=cfg.self_state))
            label_dim = s
        readout = Mlp.init([cfg.state_dims[-1], *cfg.readout_hidden, n_outputs], rng,
                           "tanh", "identity")
        return cls(layers, readout, ConstraintFn(cfg.constraint, cfg.eps), cfg.task,
                   cfg.loss, cfg.multiplier_mode, cfg.detach_layers,
                   loss_reduction=cfg.loss_reduction)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def state_dims(self) -> list[int]:
        return [a.state_dim for a in self.layers]

    @property
    def feature_dim(self) -> int:
        return self.layers[0].label_dim

    @property
    def arc_dim(self) -> int:
        return self.layers[0].arc_dim

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for k, agg in enumerate(self.layers):
            out.update(agg.parameters(f"layer{k}."))
        out.update(self.readout.parameters("readout."))
        return out

    def copy(self) -> "LpModel":
        return LpModel([a.copy() for a in self.layers], self.readout.copy(), self.constraint,
                       self.task, self.loss, self.multiplier_mode, self.detach_layers,
                       dict(self.meta), self.loss_reduction)

    def zero_states(self, n: int) -> list[np.ndarray]:
        return [np.zeros((n, s)) for s in self.state_dims]

    def zero_multipliers(self, n: int) -> list[np.ndarray]:
        if self.multiplier_mode == "scalar":
            return [np.zeros((n, 1)) for _ in self.layers]
        return [np.zeros((n, s)) for s in self.state_dims]
