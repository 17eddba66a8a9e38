"""Shared oracles: finite-difference gradients and a straight-line SGD loop."""

import numpy as np

from hogtrain.data import Dataset, reorder, shuffle_epoch
from hogtrain.engine import epoch_shuffle_seed
from hogtrain.nn import Model, apply_update, backward, cross_entropy_loss, forward, loss_sum


def finite_difference_grad(model: Model, batch, labels, h: float = 1e-5):
    """Central differences of the mean cross-entropy w.r.t. every weight."""
    grads = []
    for w in model.weights:
        g = np.zeros_like(w)
        flat = w.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = cross_entropy_loss(forward(model, batch), labels)
            flat[i] = orig - h
            down = cross_entropy_loss(forward(model, batch), labels)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor: float = 1e-4) -> float:
    """Worst per-entry |a - n| / max(|a|, |n|, floor) across all layers."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def random_small_net(rng: np.random.Generator):
    """Architecture/batch sampler for gradient checks: <=4 weight layers,
    widths <= 8, batch <= 8."""
    from hogtrain.nn import Architecture, InitScheme, init_model

    depth = int(rng.integers(1, 5))
    sizes = tuple(int(rng.integers(1, 9)) for _ in range(depth + 1))
    sizes = (sizes[0], *sizes[1:-1], max(sizes[-1], 2))  # softmax needs >= 2 classes
    arch = Architecture(sizes)
    model = init_model(arch, seed=int(rng.integers(0, 2**31)), scheme=InitScheme.SCALED_GAUSSIAN)
    batch_size = int(rng.integers(1, 9))
    batch = rng.normal(size=(batch_size, arch.input_dim))
    labels = rng.integers(0, arch.class_count, size=batch_size)
    return model, batch, labels


def sequential_minibatch_sgd(ds: Dataset, model: Model, batch_size: int, eta: float,
                             epochs: int, run_seed: int) -> list[float]:
    """Plain sequential mini-batch SGD over contiguous shuffled ranges.

    Mirrors the scheduling contract (per-epoch reshuffle, short tail batch,
    loss before training and after each epoch) without any coordinator,
    queue or worker machinery, so it serves as the independent reference
    for the engine's single-worker deterministic mode.
    """
    losses = [loss_sum(model, ds.features, ds.labels) / ds.n_examples]
    for epoch in range(epochs):
        epoch_ds = reorder(ds, shuffle_epoch(ds, epoch_shuffle_seed(run_seed, epoch)))
        for start in range(0, epoch_ds.n_examples, batch_size):
            stop = min(start + batch_size, epoch_ds.n_examples)
            x = epoch_ds.features[start:stop]
            y = epoch_ds.labels[start:stop]
            tape = forward(model, x)
            grad = backward(model, tape, y)
            apply_update(model, grad, eta)
        losses.append(loss_sum(model, ds.features, ds.labels) / ds.n_examples)
    return losses
