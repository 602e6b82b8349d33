"""Feed-forward network engine: LeNet / ResNet-18 construction, inference, SGD."""

from .layers import (Conv, Flatten, FullyConnected, LAYER_KINDS, MaxPool, ReLU, ResidualBlock,
                     ShapeMismatch, Softmax, softmax)
from .network import (ARCHITECTURES, DimensionMismatch, NetworkSpec, backward, build_network,
                      check_weights, cross_entropy, forward, lenet_spec, logits,
                      loss_and_gradients, predict, resnet18_spec)
from .train import EmptyDataset, accuracy, one_hot_rows, train_sgd
from .whitebox import fgs_attack, fgs_from_gradient, fgv_attack, fgv_from_gradient, input_gradient

__all__ = [
    "ARCHITECTURES", "Conv", "DimensionMismatch", "EmptyDataset", "Flatten", "FullyConnected",
    "LAYER_KINDS", "MaxPool", "NetworkSpec", "ReLU", "ResidualBlock", "ShapeMismatch", "Softmax",
    "accuracy", "backward", "build_network", "check_weights", "cross_entropy", "fgs_attack",
    "fgs_from_gradient", "fgv_attack", "fgv_from_gradient", "forward", "input_gradient",
    "lenet_spec", "logits", "loss_and_gradients", "one_hot_rows", "predict", "resnet18_spec",
    "softmax", "train_sgd",
]
