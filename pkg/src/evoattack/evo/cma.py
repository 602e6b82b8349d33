"""CMA-ES: sampling, evolution path, rank-1/rank-mu updates, mean update.

The building blocks are plain functions over numpy arrays so that each can
be checked in isolation; :class:`CMAES` wires them into an ask/tell loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .base import EvaluatedPoint, EmptyElite, Optimizer, make_rng, select_order
from .linalg import NotPositiveSemidefinite, NotSymmetric, eigendecompose


class CovarianceDegenerate(RuntimeError):
    """Covariance lost positive definiteness beyond repair."""


def default_weights(mu: int) -> np.ndarray:
    w = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    return w / w.sum()


@dataclass(frozen=True)
class CmaParams:
    dimension: int
    population_size: int
    elite_count: int
    weights: tuple
    c_c: float
    c_1: float
    c_mu: float
    c_m: float = 1.0
    sigma0: float = 0.5
    sigma_adaptation: str = "cumulative"  # or "fixed"
    c_sigma: float = 0.0
    d_sigma: float = 1.0

    def __post_init__(self):
        n, lam, mu = self.dimension, self.population_size, self.elite_count
        if n < 1 or lam < 1 or mu < 1:
            raise ValueError("dimension, population_size and elite_count must be positive")
        if mu > lam:
            raise ValueError(f"elite_count {mu} exceeds population_size {lam}")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (mu,):
            raise ValueError(f"need {mu} weights, got {w.shape}")
        if np.any(w < 0) or np.any(np.diff(w) > 0):
            raise ValueError("weights must be nonnegative and nonincreasing")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        for name in ("c_c", "c_1", "c_mu", "c_m"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.sigma_adaptation not in ("cumulative", "fixed"):
            raise ValueError(f"unknown sigma_adaptation {self.sigma_adaptation!r}")

    @property
    def mu_eff(self) -> float:
        w = np.asarray(self.weights)
        return float(1.0 / np.sum(w * w))

    @classmethod
    def default(cls, dimension, population_size=None, elite_count=None,
                sigma0=0.5, sigma_adaptation="cumulative", **overrides):
        n = int(dimension)
        lam = population_size or 4 + int(3 * math.log(n))
        mu = elite_count or lam // 2
        w = default_weights(mu)
        mu_eff = 1.0 / np.sum(w * w)
        c_1 = 2.0 / ((n + 1.3) ** 2 + mu_eff)
        c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
        c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0)
        d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
        values = dict(
            dimension=n, population_size=lam, elite_count=mu, weights=tuple(w),
            c_c=4.0 / (n + 4.0), c_1=c_1, c_mu=max(c_mu, 0.0), c_m=1.0,
            sigma0=sigma0, sigma_adaptation=sigma_adaptation,
            c_sigma=c_sigma, d_sigma=d_sigma,
        )
        values.update(overrides)
        return cls(**values)


@dataclass
class CmaState:
    mean: np.ndarray
    cov: np.ndarray
    sigma: float
    p_c: np.ndarray
    p_sigma: np.ndarray
    generation: int = 0
    B: np.ndarray = None
    D: np.ndarray = None
    cache_valid: bool = False
    eigen_generation: int = -1

    @classmethod
    def initial(cls, mean, sigma, cov=None):
        m = np.array(mean, dtype=float)
        n = m.size
        C = np.eye(n) if cov is None else np.array(cov, dtype=float)
        return cls(mean=m, cov=C, sigma=float(sigma), p_c=np.zeros(n), p_sigma=np.zeros(n))

    def refresh_eigen(self) -> None:
        try:
            self.B, self.D = eigendecompose(self.cov)
        except (NotSymmetric, NotPositiveSemidefinite) as exc:
            raise CovarianceDegenerate(str(exc)) from exc
        if not np.all(np.isfinite(self.D)) or self.D[0] <= 0:
            raise CovarianceDegenerate("covariance has no usable spectrum")
        self.cache_valid = True
        self.eigen_generation = self.generation

    def copy(self) -> "CmaState":
        return CmaState(
            self.mean.copy(), self.cov.copy(), self.sigma, self.p_c.copy(),
            self.p_sigma.copy(), self.generation,
            None if self.B is None else self.B.copy(),
            None if self.D is None else self.D.copy(),
            self.cache_valid, self.eigen_generation,
        )


def sample_population(state: CmaState, lam: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``lam`` points ``m + sigma * B @ diag(D) @ z``, one per row."""
    if state.B is None:
        state.refresh_eigen()
    z = rng.standard_normal((lam, state.mean.size))
    return state.mean + state.sigma * (z * state.D) @ state.B.T


def update_evolution_path(p_c, m_old, m_new, sigma, c_c):
    return (1.0 - c_c) * np.asarray(p_c) + math.sqrt(c_c * (2.0 - c_c)) * (
        (np.asarray(m_new) - np.asarray(m_old)) / sigma)


def rank_one_update(C, p_c, c_1):
    p = np.asarray(p_c, dtype=float)
    return (1.0 - c_1) * np.asarray(C) + c_1 * np.outer(p, p)


def rank_mu_update(C, elite, m_old, sigma, weights, c_mu):
    """Weighted outer products of the elite steps ``(x - m_old) / sigma``."""
    X = np.atleast_2d(np.asarray(elite, dtype=float))
    if X.shape[0] == 0 or X.size == 0:
        raise EmptyElite("rank-mu update needs at least one elite point")
    w = np.asarray(weights, dtype=float)[: X.shape[0]]
    Y = (X - m_old) / sigma
    S = (Y.T * w) @ Y
    out = (1.0 - c_mu) * np.asarray(C) + c_mu * S
    return 0.5 * (out + out.T)


def update_mean(m, elite, weights, c_m):
    X = np.atleast_2d(np.asarray(elite, dtype=float))
    if X.shape[0] == 0 or X.size == 0:
        raise EmptyElite("mean update needs at least one elite point")
    w = np.asarray(weights, dtype=float)[: X.shape[0]]
    m = np.asarray(m, dtype=float)
    return m + c_m * (w @ (X - m))


def expected_norm(n: int) -> float:
    """E||N(0, I_n)||, standard series approximation."""
    return math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))


class CMAES(Optimizer):
    """Ask/tell CMA-ES over a dense covariance."""

    name = "cmaes"

    def __init__(self, params: CmaParams, mean=None, seed=None, rng=None):
        self.params = params
        n = params.dimension
        mean = np.zeros(n) if mean is None else np.asarray(mean, dtype=float)
        if mean.shape != (n,):
            raise ValueError(f"mean has shape {mean.shape}, expected ({n},)")
        self.state = CmaState.initial(mean, params.sigma0)
        self.rng = rng if rng is not None else make_rng(seed)
        self._eigen_gap = max(1, int(params.population_size / (
            (params.c_1 + params.c_mu + 1e-300) * n * 10.0)))
        self._pending = None
        super().__init__(n, params.population_size)

    @property
    def mean(self) -> np.ndarray:
        return self.state.mean

    def _maybe_refresh(self) -> None:
        st = self.state
        if st.B is None or (not st.cache_valid
                            and st.generation - st.eigen_generation >= self._eigen_gap):
            st.refresh_eigen()

    def ask(self) -> np.ndarray:
        self._maybe_refresh()
        X = sample_population(self.state, self.params.population_size, self.rng)
        self._pending = X
        return X

    def tell(self, X, fitness) -> EvaluatedPoint:
        X = np.asarray(X, dtype=float)
        f = np.asarray(fitness, dtype=float)
        self._check_told(X, f)
        p, st = self.params, self.state
        order = select_order(f)
        elite = X[order[: p.elite_count]]
        w = np.asarray(p.weights)

        m_old, sigma = st.mean, st.sigma
        m_new = update_mean(m_old, elite, w, p.c_m)
        if p.sigma_adaptation == "cumulative":
            if st.B is None:
                st.refresh_eigen()
            step = (m_new - m_old) / sigma
            inv_sqrt_step = st.B @ ((st.B.T @ step) / st.D)
            st.p_sigma = (1.0 - p.c_sigma) * st.p_sigma + math.sqrt(
                p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff) * inv_sqrt_step
        st.p_c = update_evolution_path(st.p_c, m_old, m_new, sigma, p.c_c)
        C = rank_one_update(st.cov, st.p_c, p.c_1)
        C = rank_mu_update(C, elite, m_old, sigma, w, p.c_mu)
        if not np.all(np.isfinite(C)):
            raise CovarianceDegenerate("covariance update produced non-finite entries")
        st.cov = C
        st.mean = m_new
        if p.sigma_adaptation == "cumulative":
            ratio = np.linalg.norm(st.p_sigma) / expected_norm(p.dimension)
            st.sigma = sigma * math.exp(min(1.0, (p.c_sigma / p.d_sigma) * (ratio - 1.0)))
        st.generation += 1
        st.cache_valid = False
        self._pending = None
        return self._record(X, f, order[0])
