"""Baseline evolution algorithms: simple GA, PEPG and OpenAI-ES."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import EvaluatedPoint, EmptyElite, Optimizer, centered_ranks, make_rng, select_order


def _positive(**values):
    for name, value in values.items():
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class GaParams:
    dimension: int
    population_size: int = 25
    elite_count: int | None = None
    mutation_std: float = 0.05
    sigma0: float = 0.05

    def __post_init__(self):
        _positive(dimension=self.dimension, population_size=self.population_size,
                  sigma0=self.sigma0)
        if self.mutation_std < 0:
            raise ValueError("mutation_std must be nonnegative")
        if self.elite_count is not None and not 1 <= self.elite_count <= self.population_size:
            raise ValueError("elite_count must lie in [1, population_size]")

    @property
    def mu(self) -> int:
        return self.elite_count or max(1, self.population_size // 2)


class SimpleGA(Optimizer):
    """Truncation selection, elitism, uniform crossover, Gaussian mutation.

    The top ``mu`` individuals survive unchanged; the remaining slots are
    filled by children of two distinct random elites (one parent if mu=1).
    """

    name = "ga"

    def __init__(self, params: GaParams, mean=None, seed=None, rng=None):
        super().__init__(params.dimension, params.population_size)
        self.params = params
        self.rng = rng if rng is not None else make_rng(seed)
        m = np.zeros(params.dimension) if mean is None else np.asarray(mean, dtype=float)
        self.population = m + params.sigma0 * self.rng.standard_normal(
            (params.population_size, params.dimension))

    @property
    def mean(self) -> np.ndarray:
        return self.population.mean(axis=0)

    def ask(self) -> np.ndarray:
        return self.population.copy()

    def breed(self, elite: np.ndarray) -> np.ndarray:
        if len(elite) == 0:
            raise EmptyElite("GA generation needs at least one elite")
        p = self.params
        n_children = p.population_size - len(elite)
        if n_children == 0:
            return elite.copy()
        k = len(elite)
        if k == 1:
            a = b = np.zeros(n_children, dtype=int)
        else:
            a = self.rng.integers(0, k, n_children)
            b = (a + self.rng.integers(1, k, n_children)) % k
        mask = self.rng.random((n_children, p.dimension)) < 0.5
        children = np.where(mask, elite[a], elite[b])
        if p.mutation_std > 0:
            children = children + p.mutation_std * self.rng.standard_normal(children.shape)
        return np.vstack([elite, children])

    def tell(self, X, fitness) -> EvaluatedPoint:
        X = np.asarray(X, dtype=float)
        f = np.asarray(fitness, dtype=float)
        self._check_told(X, f)
        order = select_order(f)
        self.population = self.breed(X[order[: self.params.mu]])
        return self._record(X, f, order[0])


@dataclass(frozen=True)
class PepgParams:
    dimension: int
    population_size: int = 25
    sigma0: float = 0.05
    mean_lr: float = 1.0
    sigma_lr: float = 0.1
    sigma_min: float = 1e-8

    def __post_init__(self):
        _positive(dimension=self.dimension, population_size=self.population_size,
                  sigma0=self.sigma0, mean_lr=self.mean_lr, sigma_min=self.sigma_min)
        if self.sigma_lr < 0:
            raise ValueError("sigma_lr must be nonnegative")


class PEPG(Optimizer):
    """Symmetric-sampling parameter-exploring policy gradients.

    Keeps a mean and a per-coordinate stddev. Perturbations come in
    antithetic pairs ``m + e, m - e``; an odd population adds the mean
    itself as a last candidate. Fitness is rank-shaped before use.
    """

    name = "pepg"

    def __init__(self, params: PepgParams, mean=None, seed=None, rng=None):
        super().__init__(params.dimension, params.population_size)
        self.params = params
        self.rng = rng if rng is not None else make_rng(seed)
        self.m = np.zeros(params.dimension) if mean is None else np.asarray(mean, dtype=float).copy()
        self.stdev = np.full(params.dimension, params.sigma0)
        self.half = params.population_size // 2
        self._eps = None

    @property
    def mean(self) -> np.ndarray:
        return self.m

    def ask(self) -> np.ndarray:
        self._eps = self.rng.standard_normal((self.half, self.dimension)) * self.stdev
        parts = [self.m + self._eps, self.m - self._eps]
        if self.population_size % 2:
            parts.append(self.m[None, :])
        return np.vstack(parts)

    def tell(self, X, fitness) -> EvaluatedPoint:
        X = np.asarray(X, dtype=float)
        f = np.asarray(fitness, dtype=float)
        self._check_told(X, f)
        eps, h, p = self._eps, self.half, self.params
        if eps is None:
            eps = X[:h] - self.m
        u = centered_ranks(f)
        u_plus, u_minus = u[:h], u[h:2 * h]
        if h > 0:
            self.m = self.m + p.mean_lr * ((u_plus - u_minus) / 2.0) @ eps / h
            baseline = u[: 2 * h].mean()
            r_s = (u_plus + u_minus) / 2.0 - baseline
            s2 = self.stdev ** 2
            grad_s = (r_s @ ((eps ** 2 - s2) / self.stdev)) / h
            self.stdev = np.maximum(self.stdev + p.sigma_lr * grad_s, p.sigma_min)
        self._eps = None
        return self._record(X, f, select_order(f)[0])


@dataclass(frozen=True)
class OpenAiEsParams:
    dimension: int
    population_size: int = 25
    sigma0: float = 0.05
    learning_rate: float = 0.05

    def __post_init__(self):
        _positive(dimension=self.dimension, population_size=self.population_size,
                  sigma0=self.sigma0, learning_rate=self.learning_rate)


class OpenAIES(Optimizer):
    """Fixed-sigma antithetic ES with rank-shaped gradient estimate.

    ``m <- m + lr / (lam * sigma) * sum_i u_i * eps_i`` where ``u`` are the
    centered ranks of the candidates ``m + sigma * eps_i``.
    """

    name = "openai"

    def __init__(self, params: OpenAiEsParams, mean=None, seed=None, rng=None):
        super().__init__(params.dimension, params.population_size)
        self.params = params
        self.rng = rng if rng is not None else make_rng(seed)
        self.m = np.zeros(params.dimension) if mean is None else np.asarray(mean, dtype=float).copy()
        self.sigma = params.sigma0
        self._eps = None

    @property
    def mean(self) -> np.ndarray:
        return self.m

    def _noise(self) -> np.ndarray:
        half = self.rng.standard_normal((self.population_size // 2, self.dimension))
        parts = [half, -half]
        if self.population_size % 2:
            parts.append(np.zeros((1, self.dimension)))
        return np.vstack(parts)

    def ask(self) -> np.ndarray:
        self._eps = self._noise()
        return self.m + self.sigma * self._eps

    def tell(self, X, fitness) -> EvaluatedPoint:
        X = np.asarray(X, dtype=float)
        f = np.asarray(fitness, dtype=float)
        self._check_told(X, f)
        eps = self._eps if self._eps is not None else (X - self.m) / self.sigma
        u = centered_ranks(f)
        p = self.params
        self.m = self.m + p.learning_rate / (self.population_size * self.sigma) * (u @ eps)
        self._eps = None
        return self._record(X, f, select_order(f)[0])
