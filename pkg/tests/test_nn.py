import math
import threading
import time

import numpy as np
import pytest

from hogtrain.linalg import as_matrix
from hogtrain.nn import (
    ActivationTape,
    Architecture,
    InitScheme,
    Model,
    apply_update,
    backward,
    cross_entropy_loss,
    deep_copy,
    forward,
    init_model,
    loss_sum,
)

from helpers import finite_difference_grad, max_relative_error, random_small_net


def zero_model(*sizes) -> Model:
    arch = Architecture(tuple(sizes))
    weights = [np.zeros((sizes[l + 1], sizes[l])) for l in range(len(sizes) - 1)]
    return Model(arch=arch, weights=weights)


class TestArchitecture:
    def test_rejects_short_or_empty_layers(self):
        with pytest.raises(ValueError):
            Architecture((5,))
        with pytest.raises(ValueError):
            Architecture((5, 0, 2))

    def test_model_shape_validation(self):
        arch = Architecture((3, 4, 2))
        with pytest.raises(ValueError):
            Model(arch=arch, weights=[np.zeros((4, 3))])
        with pytest.raises(ValueError):
            Model(arch=arch, weights=[np.zeros((3, 4)), np.zeros((2, 4))])


class TestInitModel:
    def test_deterministic_for_fixed_seed(self):
        arch = Architecture((6, 5, 3))
        a = init_model(arch, seed=123)
        b = init_model(arch, seed=123)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
        c = init_model(arch, seed=124)
        assert not np.array_equal(a.weights[0], c.weights[0])

    def test_scaled_gaussian_std(self):
        # fan-in 512 with 512 outputs: 262144 samples, expect std 1/sqrt(512)
        model = init_model(Architecture((512, 512, 2)), seed=5)
        std = model.weights[0].std()
        assert std == pytest.approx(1.0 / math.sqrt(512), rel=0.10)

    def test_fan_in_std_scheme(self):
        # fan-in 4 with 30000 outputs: 120000 samples, expect std == fan-in
        model = init_model(Architecture((4, 30000, 2)), seed=5, scheme=InitScheme.FAN_IN_STD)
        assert model.weights[0].std() == pytest.approx(4.0, rel=0.10)


class TestForward:
    def test_zero_weights_give_uniform_softmax(self):
        model = zero_model(3, 4, 2)
        tape = forward(model, np.zeros((5, 3)))
        assert np.abs(tape.output_probs - 0.5).max() <= 1e-15
        assert len(tape.per_layer) == 3

    def test_hand_computed_composition(self):
        # 2-3-2 network, single example, every neuron written out explicitly.
        w1 = as_matrix([[0.1, -0.2], [0.3, 0.4], [-0.5, 0.6]])
        w2 = as_matrix([[0.7, -0.8, 0.9], [-1.0, 1.1, -1.2]])
        model = Model(arch=Architecture((2, 3, 2)), weights=[w1, w2])
        x0, x1 = 0.5, -1.5

        def sig(v):
            return 1.0 / (1.0 + math.exp(-v))

        h = [sig(0.1 * x0 + -0.2 * x1), sig(0.3 * x0 + 0.4 * x1), sig(-0.5 * x0 + 0.6 * x1)]
        z = [
            0.7 * h[0] + -0.8 * h[1] + 0.9 * h[2],
            -1.0 * h[0] + 1.1 * h[1] + -1.2 * h[2],
        ]
        mx = max(z)
        e = [math.exp(v - mx) for v in z]
        expected = [v / sum(e) for v in e]

        tape = forward(model, as_matrix([[x0, x1]]))
        assert np.abs(tape.per_layer[1][0] - h).max() <= 1e-12
        assert np.abs(tape.output_probs[0] - expected).max() <= 1e-12

    def test_output_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        model = init_model(Architecture((4, 6, 3)), seed=9)
        tape = forward(model, rng.normal(size=(40, 4)))
        assert np.abs(tape.output_probs.sum(axis=1) - 1.0).max() <= 1e-12

    def test_dimension_mismatch(self):
        model = zero_model(3, 2)
        with pytest.raises(ValueError):
            forward(model, np.zeros((4, 5)))


def tape_from_probs(probs) -> ActivationTape:
    probs = as_matrix(probs)
    return ActivationTape(per_layer=[probs, probs], batch_size=probs.shape[0])


class TestCrossEntropyLoss:
    def test_uniform_prediction_is_log_k(self):
        tape = tape_from_probs([[0.5, 0.5], [0.5, 0.5]])
        assert cross_entropy_loss(tape, np.array([0, 1])) == pytest.approx(math.log(2), abs=1e-12)

    def test_perfect_prediction_is_zero(self):
        tape = tape_from_probs([[1.0, 0.0]])
        assert cross_entropy_loss(tape, np.array([0])) <= 1e-9

    def test_scalar_value(self):
        tape = tape_from_probs([[0.7, 0.3]])
        assert cross_entropy_loss(tape, np.array([0])) == pytest.approx(0.356675, abs=1e-6)

    def test_out_of_range_label(self):
        tape = tape_from_probs([[0.7, 0.3]])
        with pytest.raises(ValueError):
            cross_entropy_loss(tape, np.array([2]))

    def test_probability_floor_bounds_loss(self):
        tape = tape_from_probs([[1.0, 0.0]])
        loss = cross_entropy_loss(tape, np.array([1]))
        assert loss == pytest.approx(-math.log(1e-12), rel=1e-9)


class TestBackward:
    def test_matches_finite_differences_5_4_3(self):
        rng = np.random.default_rng(17)
        model = init_model(Architecture((5, 4, 3)), seed=31)
        batch = rng.normal(size=(7, 5))
        labels = rng.integers(0, 3, size=7)
        tape = forward(model, batch)
        grads = backward(model, tape, labels)
        fd = finite_difference_grad(model, batch, labels)
        assert max_relative_error(grads, fd) <= 1e-4

    def test_matches_finite_differences_random_nets(self):
        rng = np.random.default_rng(99)
        for _ in range(5):
            model, batch, labels = random_small_net(rng)
            tape = forward(model, batch)
            grads = backward(model, tape, labels)
            fd = finite_difference_grad(model, batch, labels)
            assert max_relative_error(grads, fd) <= 1e-4

    def test_zero_weight_net_class_columns_negate(self):
        rng = np.random.default_rng(5)
        model = zero_model(5, 4, 2)
        batch = rng.normal(size=(6, 5))
        labels = np.array([0, 1, 0, 1, 0, 1])
        grads = backward(model, forward(model, batch), labels)
        # Uniform probabilities make the per-example output errors for the two
        # classes exact negatives, hence the gradient rows too.
        assert np.abs(grads[-1][0] + grads[-1][1]).max() <= 1e-15
        assert np.abs(grads[0]).max() == 0.0  # nothing propagates through zero weights

    def test_duplicated_batch_mean_invariance(self):
        rng = np.random.default_rng(6)
        model = init_model(Architecture((4, 5, 3)), seed=2)
        batch = rng.normal(size=(5, 4))
        labels = rng.integers(0, 3, size=5)
        doubled = np.vstack([batch, batch])
        grads_one = backward(model, forward(model, batch), labels)
        grads_two = backward(model, forward(model, doubled), np.concatenate([labels, labels]))
        for a, b in zip(grads_one, grads_two):
            assert np.abs(a - b).max() <= 1e-12


class TestApplyUpdate:
    def test_zero_eta_keeps_model(self):
        model = init_model(Architecture((3, 4, 2)), seed=1)
        before = [w.copy() for w in model.weights]
        apply_update(model, [np.ones_like(w) for w in model.weights], 0.0)
        for w, b in zip(model.weights, before):
            assert np.array_equal(w, b)

    def test_cancellation_to_zero(self):
        model = init_model(Architecture((3, 4, 2)), seed=1)
        # eta 0.5 and gradient 2W are exact in binary floating point.
        apply_update(model, [2.0 * w for w in model.weights], 0.5)
        for w in model.weights:
            assert np.array_equal(w, np.zeros_like(w))

    def test_update_then_negated_update_restores(self):
        model = init_model(Architecture((4, 6, 3)), seed=8)
        before = [w.copy() for w in model.weights]
        rng = np.random.default_rng(0)
        grad = [rng.normal(size=w.shape) for w in model.weights]
        apply_update(model, grad, 0.37)
        apply_update(model, [-g for g in grad], 0.37)
        for w, b in zip(model.weights, before):
            assert np.abs(w - b).max() <= 1e-12

    def test_full_batch_step_decreases_loss_on_separable_data(self):
        rng = np.random.default_rng(21)
        n = 60
        x = np.vstack([rng.normal(size=(n, 2)) + [3, 0], rng.normal(size=(n, 2)) - [3, 0]])
        y = np.concatenate([np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)])
        model = init_model(Architecture((2, 8, 2)), seed=3)
        loss_before = cross_entropy_loss(forward(model, x), y)
        grads = backward(model, forward(model, x), y)
        apply_update(model, grads, 1e-2)
        loss_after = cross_entropy_loss(forward(model, x), y)
        assert loss_after < loss_before


class TestDeepCopy:
    def test_copy_equals_then_isolates(self):
        model = init_model(Architecture((3, 5, 2)), seed=4)
        copy = deep_copy(model)
        for w, c in zip(model.weights, copy.weights):
            assert np.array_equal(w, c)
            assert not np.shares_memory(w, c)
        copy.weights[0][0, 0] += 1.0
        assert model.weights[0][0, 0] != copy.weights[0][0, 0]

    def test_copy_under_concurrent_updates_has_no_torn_scalars(self):
        # A writer keeps adding exact integer increments; every scalar a copy
        # observes must be one of the integers actually stored.
        model = zero_model(16, 16, 4)
        stop = threading.Event()
        steps = 4000

        def writer():
            ones = [np.ones_like(w) for w in model.weights]
            for _ in range(steps):
                apply_update(model, ones, -1.0)  # += 1 per scalar
            stop.set()

        t = threading.Thread(target=writer)
        t.start()
        copies = []
        while not stop.is_set():
            copies.append(deep_copy(model))
            time.sleep(0)
        t.join()
        assert len(copies) >= 1
        for snap in copies:
            for w in snap.weights:
                assert np.all(w == np.round(w))
                assert w.min() >= 0.0 and w.max() <= steps


class TestInitialLoss:
    def test_fresh_model_loss_near_log_k_on_balanced_data(self):
        rng = np.random.default_rng(13)
        k = 3
        x = rng.normal(size=(900, 6))
        y = np.arange(900, dtype=np.int64) % k
        model = init_model(Architecture((6, 8, 8, k)), seed=77)
        loss = loss_sum(model, x, y) / 900
        assert abs(loss - math.log(k)) <= 0.10 * math.log(k)
