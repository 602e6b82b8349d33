"""Network specs, weight construction, forward inference and backprop."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import (Conv, Flatten, FullyConnected, LAYER_KINDS, MaxPool, ReLU, ResidualBlock,
                     ShapeMismatch, Softmax)

PROB_FLOOR = 1e-12


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple
    input_shape: tuple
    num_classes: int
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if not self.layers or self.layers[-1].kind != "Softmax":
            raise ShapeMismatch("network must end with a Softmax layer")
        out = self.shapes()[-1]
        if out != (self.num_classes,):
            raise ShapeMismatch(f"network output {out} does not match {self.num_classes} classes")

    def shapes(self):
        """Activation shapes: input first, then after every layer."""
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(tuple(layer.output_shape(shapes[-1])))
        return shapes

    def prefixes(self):
        return [f"{i}.{layer.kind.lower()}" for i, layer in enumerate(self.layers)]


def build_network(spec: NetworkSpec, init: str = "he_uniform", seed=0, dtype=np.float32) -> dict:
    """Create the WeightStore for ``spec``: an ordered name -> array dict."""
    rng = np.random.default_rng(seed)
    weights = {}
    for prefix, layer, in_shape in zip(spec.prefixes(), spec.layers, spec.shapes()):
        weights.update(layer.init(prefix, in_shape, rng, init, dtype))
    return weights


def check_weights(spec: NetworkSpec, weights: dict) -> None:
    expected = build_network(spec, init="zero", dtype=np.float32)
    if list(expected) != list(weights):
        raise ShapeMismatch(f"weight names {list(weights)} do not match spec {list(expected)}")
    for name, ref in expected.items():
        if weights[name].shape != ref.shape:
            raise ShapeMismatch(f"{name}: shape {weights[name].shape} != {ref.shape}")


def _as_batch(spec, images, dtype):
    x = np.asarray(images)
    if x.shape == spec.input_shape:
        x = x[None]
    if x.shape[1:] != spec.input_shape:
        raise ShapeMismatch(f"input shape {x.shape[1:]} != network input {spec.input_shape}")
    return x.astype(dtype, copy=False)


def _dtype(weights):
    for v in weights.values():
        return v.dtype
    return np.float64


def _run(spec, weights, x, keep_cache, stop_before_softmax=False):
    caches = []
    layers = list(zip(spec.prefixes(), spec.layers))
    if stop_before_softmax:
        layers = layers[:-1]
    for prefix, layer in layers:
        x, cache = layer.forward(weights, prefix, x)
        if keep_cache:
            caches.append(cache)
    return x, caches


def forward(spec: NetworkSpec, weights: dict, images) -> np.ndarray:
    """Class probabilities; one row per image for batched input."""
    x = _as_batch(spec, images, _dtype(weights))
    probs, _ = _run(spec, weights, x, keep_cache=False)
    return probs[0] if np.ndim(images) == len(spec.input_shape) else probs


def logits(spec: NetworkSpec, weights: dict, images) -> np.ndarray:
    x = _as_batch(spec, images, _dtype(weights))
    z, _ = _run(spec, weights, x, keep_cache=False, stop_before_softmax=True)
    return z


def cross_entropy(target, predicted) -> float | np.ndarray:
    """``-sum(target * log(predicted))`` with predictions clamped to [1e-12, 1]."""
    t = np.asarray(target, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if t.shape != p.shape:
        raise DimensionMismatch(f"target shape {t.shape} != prediction shape {p.shape}")
    out = -np.sum(t * np.log(np.clip(p, PROB_FLOOR, 1.0)), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def loss_and_gradients(spec: NetworkSpec, weights: dict, images, targets):
    """Mean cross-entropy over a batch, its weight gradients, and input gradients.

    The input gradient row ``i`` is the derivative of sample ``i``'s own loss
    with respect to its pixels (not divided by the batch size).
    Softmax and cross-entropy are fused: the logit gradient is ``p - y``.
    """
    x = _as_batch(spec, images, _dtype(weights))
    y = np.asarray(targets, dtype=x.dtype).reshape(x.shape[0], spec.num_classes)
    z, caches = _run(spec, weights, x, keep_cache=True, stop_before_softmax=True)
    p = LAYER_KINDS["Softmax"]().forward(None, None, z)[0]
    per_sample = cross_entropy(y, p)
    # d/dz of -sum(y log softmax(z)) is p * sum(y) - y, i.e. p - y for a one-hot y
    dz = p * y.sum(axis=-1, keepdims=True) - y
    grads = {}
    d = dz
    items = list(zip(spec.prefixes(), spec.layers))[:-1]
    for (prefix, layer), cache in zip(reversed(items), reversed(caches)):
        d, g = layer.backward(weights, prefix, cache, d)
        grads.update(g)
    n = x.shape[0]
    weight_grads = {name: grads[name] / n for name in weights}
    return float(np.mean(per_sample)), weight_grads, d, p


def backward(spec: NetworkSpec, weights: dict, image, target):
    """Gradients of one sample's cross-entropy: ``(weight_grads, input_grad)``."""
    image = np.asarray(image)
    single = image.shape == spec.input_shape
    _, wg, dx, _ = loss_and_gradients(spec, weights, image, target)
    return wg, dx[0] if single else dx


def predict(spec: NetworkSpec, weights: dict, images, batch_size: int = 1000) -> np.ndarray:
    x = np.asarray(images)
    out = [forward(spec, weights, x[i:i + batch_size]).argmax(axis=-1)
           for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, dtype=int)


def lenet_spec() -> NetworkSpec:
    """LeNet for 28x28x1 digits (two 3x3x20 conv blocks, FC 500, FC 10)."""
    return NetworkSpec(
        layers=(Conv(20, 3, 1, "SAME"), ReLU(), MaxPool(2),
                Conv(20, 3, 1, "SAME"), ReLU(), MaxPool(2),
                Flatten(), FullyConnected(500), ReLU(), FullyConnected(10), Softmax()),
        input_shape=(28, 28, 1), num_classes=10, name="lenet")


def resnet18_spec() -> NetworkSpec:
    """The residual network for 32x32x3 inputs, laid out as printed."""
    return NetworkSpec(
        layers=(Conv(64, 3, 1, "SAME"), ReLU(),
                ResidualBlock(64, 3, 1), ResidualBlock(128, 3, 1), MaxPool(2),
                ResidualBlock(256, 3, 2), ResidualBlock(512, 3, 1), MaxPool(2),
                Conv(512, 3, 1, "SAME"), ReLU(),
                Flatten(), FullyConnected(10), Softmax()),
        input_shape=(32, 32, 3), num_classes=10, name="resnet18")


ARCHITECTURES = {"lenet": lenet_spec, "resnet18": resnet18_spec}
