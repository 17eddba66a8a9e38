"""Fully-connected network: weight storage, forward/backward passes, loss, update.

Layout convention: a batch is (examples x features), so layer l activations
have shape (batch, d_l) and weights[l] has shape (d_{l+1}, d_l).  Hidden
layers apply the logistic activation, the output layer applies row softmax.
Gradients are means over the batch, which is what makes learning rates
proportional to batch size comparable across batch sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .linalg import (
    Matrix,
    axpy_in_place,
    gemm,
    sigmoid,
    sigmoid_deriv_from_output,
    softmax_rows,
)

PROB_FLOOR = 1e-12


class InitScheme(Enum):
    # Gaussian weights with std equal to the layer fan-in; saturates wide
    # sigmoid layers, kept for comparability.
    FAN_IN_STD = "fan_in_std"
    # std = 1 / sqrt(fan-in); the default.
    SCALED_GAUSSIAN = "scaled_gaussian"


@dataclass(frozen=True)
class Architecture:
    """Layer sizes from input dimension through hidden widths to class count."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("architecture needs at least input and output layers")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"layer sizes must be >= 1, got {self.layer_sizes}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def class_count(self) -> int:
        return self.layer_sizes[-1]

    @property
    def depth(self) -> int:
        """Number of weight matrices."""
        return len(self.layer_sizes) - 1


@dataclass
class Model:
    """The shared trainable state: one weight matrix per layer transition."""

    arch: Architecture
    weights: list[Matrix]

    def __post_init__(self):
        sizes = self.arch.layer_sizes
        if len(self.weights) != self.arch.depth:
            raise ValueError("weight count does not match architecture")
        for l, w in enumerate(self.weights):
            if w.shape != (sizes[l + 1], sizes[l]):
                raise ValueError(
                    f"weights[{l}] has shape {w.shape}, expected {(sizes[l + 1], sizes[l])}"
                )


@dataclass
class ActivationTape:
    """All intermediate layer states of one forward pass, input through softmax."""

    per_layer: list[Matrix]
    batch_size: int

    @property
    def output_probs(self) -> Matrix:
        return self.per_layer[-1]


Gradient = list  # list[Matrix], shape-matched to Model.weights


def init_model(arch: Architecture, seed, scheme: InitScheme = InitScheme.SCALED_GAUSSIAN) -> Model:
    """Draw Gaussian weights deterministically for (arch, seed, scheme)."""
    rng = np.random.default_rng(seed)
    weights = []
    for l in range(arch.depth):
        fan_in = arch.layer_sizes[l]
        fan_out = arch.layer_sizes[l + 1]
        std = float(fan_in) if scheme is InitScheme.FAN_IN_STD else 1.0 / np.sqrt(fan_in)
        weights.append(rng.normal(0.0, std, size=(fan_out, fan_in)))
    return Model(arch=arch, weights=weights)


def forward(model: Model, batch: Matrix) -> ActivationTape:
    """Propagate a batch through every layer, retaining all intermediate states."""
    if batch.ndim != 2 or batch.shape[1] != model.arch.input_dim:
        raise ValueError(
            f"batch shape {batch.shape} incompatible with input dim {model.arch.input_dim}"
        )
    layers = [batch]
    state = batch
    last = model.arch.depth - 1
    for l, w in enumerate(model.weights):
        z = gemm(state, w, transpose_b=True)
        state = softmax_rows(z) if l == last else sigmoid(z)
        layers.append(state)
    return ActivationTape(per_layer=layers, batch_size=batch.shape[0])


def cross_entropy_loss(tape: ActivationTape, labels: np.ndarray) -> float:
    """Mean negative log-probability of the true class, floored at 1e-12."""
    probs = tape.output_probs
    labels = np.asarray(labels)
    if labels.shape[0] != tape.batch_size:
        raise ValueError("label count does not match batch size")
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise ValueError(
            f"labels must lie in [0, {probs.shape[1]}), got range"
            f" [{labels.min()}, {labels.max()}]"
        )
    picked = probs[np.arange(tape.batch_size), labels]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


def loss_sum(model: Model, features: Matrix, labels: np.ndarray, chunk: int = 4096) -> float:
    """Sum of per-example cross-entropy over a slice, evaluated in chunks."""
    total = 0.0
    for start in range(0, features.shape[0], chunk):
        stop = min(start + chunk, features.shape[0])
        tape = forward(model, features[start:stop])
        total += cross_entropy_loss(tape, labels[start:stop]) * (stop - start)
    return total


def backward(model: Model, tape: ActivationTape, labels: np.ndarray) -> Gradient:
    """Gradient of the mean cross-entropy w.r.t. every weight matrix.

    Uses the fused softmax/cross-entropy error (probs - onehot) / batch at
    the output, then walks back through each W^T and the logistic
    derivative.
    """
    labels = np.asarray(labels)
    probs = tape.output_probs
    n = tape.batch_size
    if labels.shape[0] != n:
        raise ValueError("label count does not match batch size")

    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grads: Gradient = [None] * model.arch.depth
    for l in range(model.arch.depth - 1, -1, -1):
        grads[l] = gemm(delta, tape.per_layer[l], transpose_a=True)
        if l > 0:
            delta = gemm(delta, model.weights[l]) * sigmoid_deriv_from_output(tape.per_layer[l])
    return grads


def apply_update(model: Model, grad: Gradient, eta: float) -> None:
    """W^l -= eta * g^l for every layer, via unsynchronized in-place stores."""
    if len(grad) != len(model.weights):
        raise ValueError("gradient layer count does not match model")
    for w, g in zip(model.weights, grad):
        axpy_in_place(w, g, -eta)


def deep_copy(model: Model) -> Model:
    """Independent snapshot of the model; mutating it never touches the original."""
    return Model(arch=model.arch, weights=[np.array(w, copy=True) for w in model.weights])
