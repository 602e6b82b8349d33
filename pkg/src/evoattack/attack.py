"""Targeted black-box evolution attack.

The classifier is reachable only through :class:`ClassifierOracle`, which
returns probability vectors and counts queries. The attack searches the
perturbation space with any optimizer from :mod:`evoattack.evo`, scoring
each candidate by cross-entropy to the one-hot target plus an optional
weighted perturbation norm.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from . import evo
from .metrics import SimilarityReport, norm, norms, similarity_report
from .nn.network import NetworkSpec, cross_entropy, forward

NORM_KINDS = ("none", "l2", "linf")


class InvalidTarget(ValueError):
    pass


class TooFewClasses(ValueError):
    pass


class ClassifierOracle:
    """Image -> probability vector, with a query counter.

    ``predict`` maps a batch ``(B, h, w, c)`` to ``(B, n)`` probabilities.
    Each image evaluated counts as one query, whether it arrives alone or
    in a batch.
    """

    def __init__(self, predict, num_classes: int | None = None):
        self._predict = predict
        self._lock = threading.Lock()
        self._calls = 0
        self.num_classes = num_classes

    @property
    def calls(self) -> int:
        return self._calls

    def _count(self, k: int) -> None:
        with self._lock:
            self._calls += k

    def __call__(self, image) -> np.ndarray:
        return self.query_batch(np.asarray(image)[None])[0]

    def query_batch(self, images) -> np.ndarray:
        images = np.asarray(images)
        self._count(len(images))
        return np.asarray(self._predict(images), dtype=float)

    @classmethod
    def from_network(cls, spec: NetworkSpec, weights: dict) -> "ClassifierOracle":
        return cls(lambda x: forward(spec, weights, x), spec.num_classes)


def one_hot(t: int, n: int) -> np.ndarray:
    if not 0 <= t < n:
        raise IndexError(f"class index {t} outside [0, {n})")
    v = np.zeros(n)
    v[t] = 1.0
    return v


def second_likely_target(p) -> int:
    """Index of the second-largest probability; ties go to the lower index."""
    p = np.asarray(p, dtype=float)
    if p.size < 2:
        raise TooFewClasses("need at least two classes")
    order = np.argsort(-p, kind="stable")
    return int(order[1])


def clip_candidate(image, eta):
    """``clip(X + eta, 0, 1)`` and the effective perturbation it realizes."""
    image = np.asarray(image, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if image.shape != eta.shape:
        raise ValueError(f"perturbation shape {eta.shape} != image shape {image.shape}")
    adv = np.clip(image + eta, 0.0, 1.0)
    return adv, adv - image


def perturbation_norm(eta, norm_kind: str) -> float:
    if norm_kind == "none":
        return 0.0
    return norm(eta, norm_kind)


def adversarial_fitness(output, target_vec, eta, beta: float, norm_kind: str) -> float:
    """Cross-entropy to the target label plus ``beta`` times the chosen norm."""
    if norm_kind not in NORM_KINDS:
        raise ValueError(f"unknown norm {norm_kind!r}")
    ce = cross_entropy(target_vec, output)
    if norm_kind == "none":
        return ce
    return ce + beta * perturbation_norm(eta, norm_kind)


@dataclass(frozen=True)
class AttackConfig:
    optimizer: str = "cmaes"
    population_size: int = 25
    elite_count: int | None = None
    sigma0: float = 0.05
    sigma_mode: str = "fixed"
    beta: float = 1.0
    norm: str = "none"
    max_generations: int = 500
    seed: int | None = 0

    def __post_init__(self):
        if self.optimizer not in evo.OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.norm not in NORM_KINDS:
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.max_generations < 1:
            raise ValueError("max_generations must be at least 1")
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")


@dataclass
class AttackResult:
    adversarial_example: np.ndarray
    perturbation: np.ndarray
    success: bool
    target: int
    original_class: int
    generations: int
    oracle_calls: int
    similarity: SimilarityReport
    raw_norms: tuple
    final_class: int
    history: list = field(default_factory=list)

    def report(self) -> dict:
        return {
            "success": self.success,
            "target": self.target,
            "original_class": self.original_class,
            "final_class": self.final_class,
            "generations": self.generations,
            "oracle_calls": self.oracle_calls,
            "similarity": self.similarity.as_dict(),
            "raw_norms": dict(zip(("l1", "l2", "linf"), self.raw_norms)),
            "fitness_history": list(self.history),
        }


def evolution_attack(oracle: ClassifierOracle, image, target: int | None,
                     config: AttackConfig = AttackConfig(), rng=None) -> AttackResult:
    """Search for ``eta`` so that ``oracle(clip(X + eta))`` ranks ``target`` first.

    ``target=None`` picks the second most likely class of the clean image.
    Every generation is scanned for candidates already classified as the
    target; the first generation with any stops the run and the one with the
    smallest norm (L2 when no norm is regularized) is returned. Otherwise the
    lowest-fitness candidate seen is returned with ``success=False``.
    """
    X = np.asarray(image, dtype=float)
    calls_before = oracle.calls
    clean = oracle(X)
    n_classes = clean.size
    cls = int(np.argmax(clean))
    if target is None:
        target = second_likely_target(clean)
    if not 0 <= target < n_classes:
        raise InvalidTarget(f"target {target} outside [0, {n_classes})")
    if target == cls:
        raise InvalidTarget(f"target {target} is already the predicted class")

    y_target = one_hot(target, n_classes)
    select_kind = config.norm if config.norm != "none" else "l2"
    opt = evo.make_optimizer(config.optimizer, X.size, config.population_size,
                             sigma0=config.sigma0, elite_count=config.elite_count,
                             sigma_mode=config.sigma_mode, mean=np.zeros(X.size),
                             seed=config.seed if rng is None else rng)

    history = []
    best = None  # (fitness, adversarial, effective eta, raw eta, predicted class)
    found = None
    g = 0
    for g in range(1, config.max_generations + 1):
        raw = opt.ask()
        etas = raw.reshape((-1,) + X.shape)
        adv = np.clip(X + etas, 0.0, 1.0)
        eff = adv - X
        probs = oracle.query_batch(adv)
        ce = cross_entropy(np.broadcast_to(y_target, probs.shape), probs)
        flat = eff.reshape(len(eff), -1)
        if config.norm == "none":
            fitness = ce
        else:
            penalty = (np.sqrt(np.sum(flat * flat, axis=1)) if config.norm == "l2"
                       else np.max(np.abs(flat), axis=1))
            fitness = ce + config.beta * penalty
        opt.tell(raw, fitness)
        i = int(evo.select_order(fitness)[0])
        history.append(float(fitness[i]))
        pred = probs.argmax(axis=1)
        if best is None or fitness[i] < best[0]:
            best = (float(fitness[i]), adv[i], eff[i], etas[i], int(pred[i]))
        hits = np.flatnonzero(pred == target)
        if hits.size:
            sizes = [norm(flat[j], select_kind) for j in hits]
            j = int(hits[int(np.argmin(sizes))])
            found = (float(fitness[j]), adv[j], eff[j], etas[j], target)
            break

    chosen = found if found is not None else best
    _, adv_x, eff_eta, raw_eta, final_cls = chosen
    return AttackResult(
        adversarial_example=adv_x,
        perturbation=eff_eta,
        success=found is not None,
        target=target,
        original_class=cls,
        generations=g,
        oracle_calls=oracle.calls - calls_before,
        similarity=similarity_report(X, adv_x),
        raw_norms=norms(raw_eta),
        final_class=final_cls,
        history=history,
    )


def verify(oracle: ClassifierOracle, result: AttackResult) -> bool:
    """Fresh oracle query on the returned example; True iff it hits the target."""
    return int(np.argmax(oracle(result.adversarial_example))) == result.target
