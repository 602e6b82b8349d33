"""Gradient-based white-box baselines (fast gradient sign / value)."""
from __future__ import annotations

import numpy as np

from .network import NetworkSpec, backward


def input_gradient(spec: NetworkSpec, weights: dict, image, true_label: int) -> np.ndarray:
    target = np.zeros(spec.num_classes)
    target[true_label] = 1.0
    _, grad = backward(spec, weights, image, target)
    return grad


def fgs_from_gradient(grad, eps: float) -> np.ndarray:
    return eps * np.sign(grad)


def fgv_from_gradient(grad, eps: float) -> np.ndarray:
    return eps * np.asarray(grad)


def fgs_attack(spec, weights, image, true_label: int, eps: float) -> np.ndarray:
    """``eps * sign(grad_x J)``; zero-gradient pixels stay unperturbed."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return fgs_from_gradient(input_gradient(spec, weights, image, true_label), eps)


def fgv_attack(spec, weights, image, true_label: int, eps: float) -> np.ndarray:
    """``eps * grad_x J``."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return fgv_from_gradient(input_gradient(spec, weights, image, true_label), eps)
