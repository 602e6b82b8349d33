from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyElite(ValueError):
    pass


class BudgetExhausted(RuntimeError):
    """Generation cap reached before the terminal condition held."""

    def __init__(self, result):
        super().__init__(f"budget exhausted after {result.generations} generations")
        self.result = result


@dataclass(frozen=True)
class EvaluatedPoint:
    point: np.ndarray
    fitness: float


def make_rng(seed=None) -> np.random.Generator:
    """Counter-based generator (Philox) from an int, a SeedSequence or None."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def select_order(fitness) -> np.ndarray:
    """Indices sorted by ascending fitness; ties keep sample order."""
    return np.argsort(np.asarray(fitness), kind="stable")


def centered_ranks(fitness) -> np.ndarray:
    """Map fitness (lower is better) to utilities in [-0.5, 0.5], best = 0.5.

    Tied values share their average rank, so a flat population maps to zeros.
    """
    f = np.asarray(fitness, dtype=float)
    n = f.size
    if n < 2:
        return np.zeros(n)
    values, inverse = np.unique(-f, return_inverse=True)
    counts = np.bincount(inverse)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    avg_rank = starts + (counts - 1) / 2.0
    return avg_rank[inverse] / (n - 1) - 0.5


class Optimizer:
    """Common ask/tell surface: ``ask() -> (lam, n)``, ``tell(X, f) -> best``."""

    name = "optimizer"

    def __init__(self, dimension: int, population_size: int):
        self.dimension = dimension
        self.population_size = population_size
        self.best: EvaluatedPoint | None = None
        self.generation = 0
        self.evaluations = 0

    def ask(self) -> np.ndarray:
        raise NotImplementedError

    def tell(self, X, fitness) -> EvaluatedPoint:
        raise NotImplementedError

    def step(self, fitness_fn) -> EvaluatedPoint:
        """One generation. ``fitness_fn`` maps a (lam, n) array to lam values."""
        X = self.ask()
        f = np.asarray(fitness_fn(X), dtype=float)
        return self.tell(X, f)

    def _check_told(self, X: np.ndarray, f: np.ndarray) -> None:
        if X.shape != (self.population_size, self.dimension):
            raise ValueError(f"population shape {X.shape} does not match "
                             f"({self.population_size}, {self.dimension})")
        if f.shape != (self.population_size,):
            raise ValueError(f"expected {self.population_size} fitness values, got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("fitness values must be finite")

    def _record(self, X, f, best_index) -> EvaluatedPoint:
        self.generation += 1
        self.evaluations += len(f)
        gen_best = EvaluatedPoint(X[best_index].copy(), float(f[best_index]))
        if self.best is None or gen_best.fitness < self.best.fitness:
            self.best = gen_best
        return gen_best


def pointwise(func):
    """Lift a scalar objective ``f(x) -> float`` to the batched form."""
    def batched(X):
        return np.array([func(x) for x in np.atleast_2d(X)], dtype=float)
    return batched
