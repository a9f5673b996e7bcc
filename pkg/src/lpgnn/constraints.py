"""Constraint-shaping functions G applied to state residuals ``x_v - f_a,v``.

Every variant satisfies ``G(0) = 0``.  At kinks the derivative is taken as 0,
so a constraint that already sits inside its tolerance band produces no
update.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VARIANTS = ("lin", "lin_eps", "abs", "abs_eps", "squared")


def _canonical(name: str) -> str:
    return name.replace("-", "_").lower()


@dataclass(frozen=True)
class ConstraintFn:
    variant: str = "abs"
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variant", _canonical(self.variant))
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown constraint variant {self.variant!r}; "
                             f"choose from {', '.join(VARIANTS)}")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")

    @property
    def unilateral(self) -> bool:
        return self.variant in ("abs", "abs_eps", "squared")

    @property
    def eps_insensitive(self) -> bool:
        return self.variant in ("lin_eps", "abs_eps")

    def value(self, x):
        return g_eval(self, x)

    def grad(self, x):
        return g_grad(self, x)


def g_eval(c: ConstraintFn, x):
    x = np.asarray(x, dtype=np.float64)
    eps = c.epsilon
    if c.variant == "lin":
        out = x.copy()
    elif c.variant == "lin_eps":
        out = np.maximum(x, eps) - np.maximum(-x, eps)
    elif c.variant == "abs":
        out = np.abs(x)
    elif c.variant == "abs_eps":
        out = np.maximum(np.abs(x) - eps, 0.0)
    else:
        out = x * x
    return out if out.ndim else float(out)


def g_grad(c: ConstraintFn, x):
    x = np.asarray(x, dtype=np.float64)
    eps = c.epsilon
    if c.variant == "lin":
        out = np.ones_like(x)
    elif c.variant == "lin_eps":
        # with eps == 0 this is plain lin, which has no kink
        out = np.ones_like(x) if eps == 0 else (np.abs(x) > eps).astype(np.float64)
    elif c.variant == "abs":
        out = np.sign(x)
    elif c.variant == "abs_eps":
        out = np.where(np.abs(x) > eps, np.sign(x), 0.0)
    else:
        out = 2.0 * x
    return out if out.ndim else float(out)


def residual_constraint(c: ConstraintFn, residual: np.ndarray) -> np.ndarray:
    """G applied componentwise to a residual vector (or matrix of them)."""
    return np.asarray(g_eval(c, np.asarray(residual, dtype=np.float64)))
