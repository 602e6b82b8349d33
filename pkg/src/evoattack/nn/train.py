from __future__ import annotations

import logging

import numpy as np

from .network import NetworkSpec, loss_and_gradients, predict

log = logging.getLogger(__name__)


class EmptyDataset(ValueError):
    pass


def one_hot_rows(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def train_sgd(spec: NetworkSpec, weights: dict, images, labels, epochs: int = 5,
              lr: float = 0.05, batch_size: int = 64, seed=0):
    """Plain minibatch SGD on mean cross-entropy.

    Returns ``(new_weights, history)`` where ``history`` has one dict per
    epoch with the running training ``loss`` and ``accuracy``. The input
    weights are not modified.
    """
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=int)
    if len(images) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    w = {k: v.copy() for k, v in weights.items()}
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(images))
        total_loss, correct = 0.0, 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            y = one_hot_rows(labels[idx], spec.num_classes)
            loss, grads, _, p = loss_and_gradients(spec, w, images[idx], y)
            for name, g in grads.items():
                w[name] -= (lr * g).astype(w[name].dtype)
            total_loss += loss * len(idx)
            correct += int(np.sum(p.argmax(axis=1) == labels[idx]))
        entry = {"epoch": epoch + 1, "loss": total_loss / len(order), "accuracy": correct / len(order)}
        log.info("epoch %d loss %.4f acc %.4f", entry["epoch"], entry["loss"], entry["accuracy"])
        history.append(entry)
    return w, history


def accuracy(spec: NetworkSpec, weights: dict, images, labels) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise EmptyDataset("cannot score an empty dataset")
    return float(np.mean(predict(spec, weights, images) == labels))
