"""Simultaneous perturbation stochastic approximation (SPSA)."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from ..errors import ValidationError


@dataclass(frozen=True)
class SpsaConfig:
    a: float = 0.06
    c: float = 0.12
    A: float = 200.0
    alpha: float = 0.602
    gamma: float = 0.101

    def __post_init__(self):
        for name in ("a", "c", "A", "alpha", "gamma"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"SPSA parameter {name} must be positive")

    def for_stage(self, stage: int) -> "SpsaConfig":
        """Gains used at optimization stage `stage` (0 keeps the starting values)."""
        return replace(self, a=self.a * 0.9 ** stage, c=self.c * 0.9 ** stage, A=self.A * 1.1 ** stage)


@dataclass
class SpsaResult:
    x: np.ndarray
    fun: float
    trace: np.ndarray  # mean of the two evaluations at each iteration
    nfev: int

    @property
    def best_trace(self) -> np.ndarray:
        return np.minimum.accumulate(self.trace)


def spsa_optimize(objective: Callable[[np.ndarray], float], dim: int, config: SpsaConfig | None = None,
                  evaluations: int = 1600, seed=None, x0=None) -> SpsaResult:
    """Minimize `objective` with two evaluations per iteration.

    Gains follow a_k = a / (k + 1 + A)^alpha and c_k = c / (k + 1)^gamma, with
    a Rademacher perturbation direction. One extra evaluation is spent on the
    final point.
    """
    if evaluations < 2:
        raise ValidationError("SPSA needs at least two evaluations")
    config = config or SpsaConfig()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = np.zeros(dim) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (dim,):
        raise ValidationError(f"starting point must have shape ({dim},)")
    iterations = evaluations // 2
    trace = np.empty(iterations)
    for k in range(iterations):
        ak = config.a / (k + 1 + config.A) ** config.alpha
        ck = config.c / (k + 1) ** config.gamma
        delta = rng.choice([-1.0, 1.0], size=dim)
        y_plus = objective(x + ck * delta)
        y_minus = objective(x - ck * delta)
        x = x - ak * (y_plus - y_minus) / (2 * ck * delta)
        trace[k] = 0.5 * (y_plus + y_minus)
    return SpsaResult(x, float(objective(x)), trace, 2 * iterations + 1)
