"""Derivative-free optimizers behind a common ask/tell interface."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import (BudgetExhausted, EmptyElite, EvaluatedPoint, Optimizer, centered_ranks,
                   make_rng, pointwise, select_order)
from .cma import (CMAES, CmaParams, CmaState, CovarianceDegenerate, default_weights,
                  rank_mu_update, rank_one_update, sample_population, update_evolution_path,
                  update_mean)
from .linalg import NotPositiveSemidefinite, NotSymmetric, eigendecompose, jacobi_eigh
from .simple import PEPG, GaParams, OpenAIES, OpenAiEsParams, PepgParams, SimpleGA

OPTIMIZER_KINDS = ("cmaes", "ga", "pepg", "openai")


def make_optimizer(kind: str, dimension: int, population_size: int, *, sigma0: float = 0.05,
                   elite_count: int | None = None, sigma_mode: str = "cumulative",
                   mean=None, seed=None, **extra) -> Optimizer:
    """Build an optimizer by name with the shared knobs.

    ``sigma_mode`` only matters for CMA-ES; the other algorithms have their
    own exploration-scale handling. ``extra`` goes to the params class.
    """
    rng = make_rng(seed)
    if kind == "cmaes":
        params = CmaParams.default(dimension, population_size, elite_count,
                                   sigma0=sigma0, sigma_adaptation=sigma_mode, **extra)
        return CMAES(params, mean=mean, rng=rng)
    if kind == "ga":
        return SimpleGA(GaParams(dimension, population_size, elite_count, sigma0=sigma0, **extra),
                        mean=mean, rng=rng)
    if kind == "pepg":
        return PEPG(PepgParams(dimension, population_size, sigma0=sigma0, **extra),
                    mean=mean, rng=rng)
    if kind == "openai":
        return OpenAIES(OpenAiEsParams(dimension, population_size, sigma0=sigma0, **extra),
                        mean=mean, rng=rng)
    raise ValueError(f"unknown optimizer {kind!r}; expected one of {OPTIMIZER_KINDS}")


@dataclass
class MinimizeResult:
    best: EvaluatedPoint
    history: list = field(default_factory=list)
    generations: int = 0
    terminated: bool = False

    @property
    def running_min(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.history, dtype=float))


def minimize(optimizer: Optimizer, fitness_fn, terminal=None, max_generations: int = 1000,
             strict: bool = False) -> MinimizeResult:
    """Step ``optimizer`` until ``terminal(gen_best)`` holds or the cap fires.

    ``history`` holds each generation's best fitness. With ``strict`` a
    capped run raises :class:`BudgetExhausted` carrying the result.
    """
    if max_generations < 1:
        raise ValueError("max_generations must be at least 1")
    result = None
    for g in range(1, max_generations + 1):
        gen_best = optimizer.step(fitness_fn)
        if result is None:
            result = MinimizeResult(best=gen_best)
        elif gen_best.fitness < result.best.fitness:
            result.best = gen_best
        result.history.append(gen_best.fitness)
        result.generations = g
        if terminal is not None and terminal(gen_best):
            result.terminated = True
            return result
    if strict:
        raise BudgetExhausted(result)
    return result


__all__ = [
    "BudgetExhausted", "CMAES", "CmaParams", "CmaState", "CovarianceDegenerate", "EmptyElite",
    "EvaluatedPoint", "GaParams", "MinimizeResult", "NotPositiveSemidefinite", "NotSymmetric",
    "OPTIMIZER_KINDS", "OpenAIES", "OpenAiEsParams", "Optimizer", "PEPG", "PepgParams",
    "SimpleGA", "centered_ranks", "default_weights", "eigendecompose", "jacobi_eigh",
    "make_optimizer", "make_rng", "minimize", "pointwise", "rank_mu_update", "rank_one_update",
    "sample_population", "select_order", "update_evolution_path", "update_mean",
]
