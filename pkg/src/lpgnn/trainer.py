"""Saddle-point training (descent on weights and states, ascent on multipliers),
test-time state inference and prediction."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalError, StructuralError
from .lagrangian import Problem, as_problem, lagrangian_gradients, _forward, _readout_input
from .model import LpModel, TrainConfig
from .ndmath import Adam, softmax

log = logging.getLogger(__name__)

METRIC_FIELDS = ("epoch", "loss", "lagrangian", "max_residual", "mean_residual",
                 "train_acc", "val_acc")


def _as_dict(arrays: list[np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}{k}": a for k, a in enumerate(arrays)}


def _accuracy(model: LpModel, logits: np.ndarray | None, targets) -> float:
    if logits is None or targets is None or not len(targets) or model.loss != "xent":
        return math.nan
    return float((logits.argmax(axis=1) == targets).mean())


@dataclass
class InferenceResult:
    states: list[np.ndarray]
    multipliers: list[np.ndarray]
    iterations: int
    converged: bool
    max_residual: float


@dataclass
class Evaluation:
    accuracy: float
    loss: float
    max_residual: float
    mean_residual: float
    converged: bool
    iterations: int
    probabilities: np.ndarray


@dataclass
class TrainResult:
    model: LpModel
    states: list[np.ndarray]
    multipliers: list[np.ndarray]
    history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    stopped_early: bool = False
    optimizers: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.model, self.states, self.multipliers, self.history))


class TrainingDiverged(NumericalError):
    """Raised when loss or residuals turn non-finite; carries the last good iterate."""

    def __init__(self, message, path, last_good: TrainResult):
        super().__init__(message, path)
        self.last_good = last_good


def infer_states(model: LpModel, data, cfg: TrainConfig, budget: int | None = None,
                 tolerance: float | None = None) -> InferenceResult:
    """Find states satisfying the constraints with the networks frozen.

    Fresh zero states and multipliers are optimised by the same
    descent-ascent rule as in training, without the loss term.  Stops once
    the max residual is within ``tolerance`` or the budget is spent.
    """
    prob = as_problem(model, data)
    budget = cfg.infer_budget if budget is None else budget
    tolerance = cfg.tolerance if tolerance is None else tolerance
    n = prob.node_count
    X, Lam = model.zero_states(n), model.zero_multipliers(n)
    opt_x, opt_lam = Adam(cfg.lr_x), Adam(cfg.lr_lambda)
    xs, lams = _as_dict(X, "x"), _as_dict(Lam, "lambda")
    it, max_res = 0, math.inf
    while True:
        res = lagrangian_gradients(model, prob, X, Lam, include_loss=False)
        max_res = res.max_residual
        if max_res <= tolerance or it >= budget:
            break
        opt_x.step(xs, _as_dict(res.states, "x"))
        opt_lam.step(lams, _as_dict(res.multipliers, "lambda"), ascend=True)
        it += 1
    converged = max_res <= tolerance
    if not converged:
        log.info("state inference stopped at budget %d with max residual %.3g", budget, max_res)
    return InferenceResult(X, Lam, it, converged, max_res)


def predict(model: LpModel, data, X: list[np.ndarray]) -> np.ndarray:
    """Class distributions per node (node task) or per graph (graph task).

    Node tasks read ``x_{v,K-1}`` for every node; graph tasks read the sum of
    the top-layer transition outputs of each graph.
    """
    prob = as_problem(model, data)
    if model.task == "node":
        logits, _ = model.readout.forward(X[-1])
    else:
        Fs, _ = _forward(model, prob, X, 0.0, None)
        logits, _ = model.readout.forward(_readout_input(model, prob, X, Fs))
    return softmax(logits) if model.loss == "xent" else logits


def evaluate(model: LpModel, data, cfg: TrainConfig, budget: int | None = None,
             states: list[np.ndarray] | None = None) -> Evaluation:
    """Infer states (unless given) and score the supervised nodes or graphs."""
    prob = as_problem(model, data)
    if states is None:
        inf = infer_states(model, prob, cfg, budget)
        X, converged, iters = inf.states, inf.converged, inf.iterations
    else:
        X, converged, iters = states, True, 0
    res = lagrangian_gradients(model, prob, X, model.zero_multipliers(prob.node_count))
    probs = predict(model, prob, X)
    return Evaluation(_accuracy(model, res.logits, prob.targets), res.loss, res.max_residual,
                      res.mean_residual, converged, iters, probs)


def _check_task(model: LpModel, prob: Problem):
    if prob.targets is None or not len(prob.sup_index):
        raise StructuralError(f"no supervision available for a {model.task}-focused task")


def train(model: LpModel, data, cfg: TrainConfig, val=None,
          callback: Callable[[int, LpModel, list, list], None] | None = None) -> TrainResult:
    """Simultaneous Adam descent on (weights, states) and ascent on multipliers.

    Every epoch all groups are updated from gradients taken at the same
    iterate.  With validation data, states for it are inferred every
    ``cfg.eval_every`` epochs; the weights with the best validation accuracy
    are kept and ``cfg.patience`` (in epochs) stops training once neither
    validation accuracy nor loss improves.  ``callback(epoch, model, X, Lam)``
    runs before each update and once after the last one.
    """
    prob = as_problem(model, data)
    _check_task(model, prob)
    vprob = None if val is None else as_problem(model, val)
    n = prob.node_count
    X, Lam = model.zero_states(n), model.zero_multipliers(n)
    params = model.parameters()
    xs, lams = _as_dict(X, "x"), _as_dict(Lam, "lambda")
    opt_theta, opt_x, opt_lam = Adam(cfg.lr_theta), Adam(cfg.lr_x), Adam(cfg.lr_lambda)
    rng = np.random.default_rng(cfg.seed + 1)

    result = TrainResult(model, X, Lam)
    best = None  # (val_acc, -val_loss, epoch, model, X, Lam)
    best_loss, last_improve = math.inf, 0

    def snapshot():
        return TrainResult(model.copy(), [x.copy() for x in X], [l.copy() for l in Lam],
                           list(result.history))

    for epoch in range(cfg.epochs + 1):
        if callback is not None:
            callback(epoch, model, X, Lam)
        if epoch == cfg.epochs:
            break
        try:
            res = lagrangian_gradients(model, prob, X, Lam, dropout=cfg.dropout, rng=rng)
        except NumericalError as exc:
            raise TrainingDiverged(str(exc), exc.path, snapshot()) from exc
        if not (math.isfinite(res.value) and math.isfinite(res.max_residual)):
            raise TrainingDiverged("loss or residual became non-finite", f"epoch {epoch}",
                                   snapshot())
        row = {"epoch": epoch, "loss": res.loss, "lagrangian": res.value,
               "max_residual": res.max_residual, "mean_residual": res.mean_residual,
               "train_acc": _accuracy(model, res.logits, prob.targets), "val_acc": math.nan}

        if vprob is not None and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs - 1):
            ev = evaluate(model, vprob, cfg)
            row["val_acc"] = ev.accuracy
            key = (ev.accuracy, -ev.loss)
            if best is None or key > best[0]:
                best = (key, epoch, model.copy(), [x.copy() for x in X],
                        [l.copy() for l in Lam])
                last_improve = epoch
            if ev.loss < best_loss:
                best_loss, last_improve = ev.loss, epoch
        result.history.append(row)

        try:
            opt_theta.step(params, res.params)
            opt_x.step(xs, _as_dict(res.states, "x"))
            opt_lam.step(lams, _as_dict(res.multipliers, "lambda"), ascend=True)
        except NumericalError as exc:
            raise TrainingDiverged(str(exc), exc.path, snapshot()) from exc

        if cfg.patience is not None and vprob is not None and epoch - last_improve > cfg.patience:
            result.stopped_early = True
            break

    if best is not None:
        _, result.best_epoch, best_model, bX, bLam = best
        _restore(model, best_model)
        for dst, src in zip(X, bX):
            dst[...] = src
        for dst, src in zip(Lam, bLam):
            dst[...] = src
    result.optimizers = {"theta": opt_theta, "x": opt_x, "lambda": opt_lam}
    return result


def _restore(model: LpModel, source: LpModel) -> None:
    src = source.parameters()
    for name, p in model.parameters().items():
        p[...] = src[name]
