import math

import numpy as np
import pytest

from molubench.actfn import KINDS, ActivationSpec, molu
from molubench.datasets import SeededPrng
from molubench.ndcore import (
    DenseLayer,
    Mlp,
    OptimizerState,
    adam_step,
    dense_backward,
    dense_forward,
    init_mlp,
    matmul,
    mlp_backward,
    mlp_forward,
    mse_loss,
    sgd_momentum_step,
    softmax_cross_entropy,
    topk_accuracy,
)


def naive_matmul(a, b):
    n, k = a.shape
    k2, m = b.shape
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for kk in range(k):
                out[i, j] += a[i, kk] * b[kk, j]
    return out


class TestMatmul:
    def test_identity(self):
        m = np.arange(12.0).reshape(3, 4)
        assert np.array_equal(matmul(np.eye(3), m), m)

    def test_one_by_one(self):
        assert matmul([[2.0]], [[3.0]])[0, 0] == 6.0

    def test_against_triple_loop_oracle(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 2))
        assert np.max(np.abs(matmul(a, b) - naive_matmul(a, b))) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            matmul(np.zeros((2, 3)), np.zeros((2, 3)))


class TestDenseForward:
    def test_zero_layer_zero_output(self):
        layer = DenseLayer(np.zeros((3, 2)), np.zeros(3), ActivationSpec("molu"))
        y, _ = dense_forward(layer, np.ones((4, 2)))
        assert np.array_equal(y, np.zeros((4, 3)))

    def test_identity_layer_passthrough(self):
        layer = DenseLayer(np.eye(3), np.zeros(3), None)
        x = np.arange(6.0).reshape(2, 3)
        y, _ = dense_forward(layer, x)
        assert np.array_equal(y, x)

    def test_molu_layer_matches_scalar_kernel(self):
        rng = np.random.default_rng(5)
        w = rng.standard_normal((3, 2))
        b = rng.standard_normal(3)
        x = rng.standard_normal((4, 2))
        layer = DenseLayer(w, b, ActivationSpec("molu"))
        y, _ = dense_forward(layer, x)
        affine = x @ w.T + b
        expected = np.array([[molu(float(v)) for v in row] for row in affine])
        assert np.max(np.abs(y - expected)) == 0.0

    def test_shape_mismatch(self):
        layer = DenseLayer(np.zeros((3, 2)), np.zeros(3))
        with pytest.raises(ValueError):
            dense_forward(layer, np.zeros((4, 5)))

    def test_bias_length_checked(self):
        with pytest.raises(ValueError):
            DenseLayer(np.zeros((3, 2)), np.zeros(2))


class TestDenseBackward:
    def test_zero_upstream_zero_grads(self):
        layer = DenseLayer(np.ones((3, 2)), np.zeros(3), ActivationSpec("tanh"))
        y, cache = dense_forward(layer, np.ones((4, 2)))
        dx, dw, db = dense_backward(layer, cache, np.zeros_like(y))
        assert not dx.any() and not dw.any() and not db.any()

    def test_single_unit_identity_chain_rule(self):
        layer = DenseLayer(np.array([[3.0]]), np.array([0.5]), None)
        x = np.array([[2.0]])
        _, cache = dense_forward(layer, x)
        dx, dw, db = dense_backward(layer, cache, np.array([[7.0]]))
        assert dw[0, 0] == 7.0 * 2.0
        assert db[0] == 7.0
        assert dx[0, 0] == 7.0 * 3.0

    def test_full_layer_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        layer = DenseLayer(rng.standard_normal((3, 4)), rng.standard_normal(3),
                           ActivationSpec("silu"))
        x = rng.standard_normal((5, 4))
        target = rng.standard_normal((5, 3))

        def loss_of():
            y, _ = dense_forward(layer, x)
            return mse_loss(y, target)[0]

        y, cache = dense_forward(layer, x)
        loss, dy = mse_loss(y, target)
        _, dw, db = dense_backward(layer, cache, dy)
        h = 1e-6
        for arr, grad in ((layer.weights, dw), (layer.bias, db)):
            flat, gflat = arr.ravel(), grad.ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                lp = loss_of()
                flat[idx] = orig - h
                lm = loss_of()
                flat[idx] = orig
                fd = (lp - lm) / (2 * h)
                assert abs(fd - gflat[idx]) <= 1e-6 * max(1.0, abs(fd))


class TestMseLoss:
    def test_perfect_prediction(self):
        pred = np.arange(6.0).reshape(2, 3)
        loss, grad = mse_loss(pred, pred.copy())
        assert loss == 0.0
        assert not grad.any()

    def test_unit_error(self):
        loss, _ = mse_loss(np.ones((3, 2)), np.zeros((3, 2)))
        assert loss == 1.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        pred = rng.standard_normal((3, 4))
        target = rng.standard_normal((3, 4))
        _, grad = mse_loss(pred, target)
        h = 1e-6
        for i in range(3):
            for j in range(4):
                orig = pred[i, j]
                pred[i, j] = orig + h
                lp, _ = mse_loss(pred, target)
                pred[i, j] = orig - h
                lm, _ = mse_loss(pred, target)
                pred[i, j] = orig
                assert abs((lp - lm) / (2 * h) - grad[i, j]) < 1e-7

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse_loss(np.zeros((2, 2)), np.zeros((2, 3)))


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_gives_log_classes(self):
        loss, _ = softmax_cross_entropy(np.zeros((4, 10)), [0, 3, 5, 9])
        assert loss == pytest.approx(math.log(10), abs=1e-12)

    def test_huge_margin_drives_loss_to_zero(self):
        logits = np.zeros((1, 10))
        logits[0, 4] = 50.0
        loss, _ = softmax_cross_entropy(logits, [4])
        assert 0.0 <= loss < 1e-20

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        logits = rng.standard_normal((4, 5))
        labels = [0, 2, 4, 1]
        _, grad = softmax_cross_entropy(logits, labels)
        h = 1e-6
        for i in range(4):
            for j in range(5):
                orig = logits[i, j]
                logits[i, j] = orig + h
                lp, _ = softmax_cross_entropy(logits, labels)
                logits[i, j] = orig - h
                lm, _ = softmax_cross_entropy(logits, labels)
                logits[i, j] = orig
                assert abs((lp - lm) / (2 * h) - grad[i, j]) < 1e-6

    def test_gradient_rows_sum_to_zero(self):
        rng = np.random.default_rng(10)
        logits = rng.uniform(-30, 30, size=(6, 7))
        _, grad = softmax_cross_entropy(logits, [0, 1, 2, 3, 4, 5])
        assert np.max(np.abs(grad.sum(axis=1))) < 1e-12

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.zeros((2, 3)), [0, 3])


class TestSgdMomentum:
    def test_zero_gradient_leaves_params(self):
        p = [np.ones(3)]
        state = OptimizerState.sgd_momentum(0.1, 0.5)
        sgd_momentum_step(p, [np.zeros(3)], state)
        assert np.array_equal(p[0], np.ones(3))

    def test_zero_momentum_is_plain_sgd(self):
        p = [np.zeros(2)]
        g = [np.array([1.0, -2.0])]
        state = OptimizerState.sgd_momentum(0.1, 0.0)
        sgd_momentum_step(p, g, state)
        assert np.allclose(p[0], [-0.1, 0.2], atol=1e-15)

    def test_two_steps_hand_unrolled(self):
        # v1 = g, v2 = 0.5 g + g = 1.5 g, total = -lr*g*(1 + 1.5)
        p = [np.zeros(1)]
        g = [np.array([2.0])]
        state = OptimizerState.sgd_momentum(0.1, 0.5)
        sgd_momentum_step(p, g, state)
        sgd_momentum_step(p, g, state)
        assert p[0][0] == pytest.approx(-0.1 * 2.0 * 2.5, abs=1e-15)
        assert state.step_count == 2

    def test_momentum_validated(self):
        with pytest.raises(ValueError):
            OptimizerState.sgd_momentum(0.1, 1.0)


def reference_adam(params, grads_seq, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook Adam, kept separate from the engine on purpose."""
    params = [p.copy() for p in params]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    for t, grads in enumerate(grads_seq, start=1):
        for i, g in enumerate(grads):
            m[i] = b1 * m[i] + (1 - b1) * g
            v[i] = b2 * v[i] + (1 - b2) * g * g
            mhat = m[i] / (1 - b1 ** t)
            vhat = v[i] / (1 - b2 ** t)
            params[i] = params[i] - lr * mhat / (np.sqrt(vhat) + eps)
    return params


class TestAdam:
    def test_zero_gradient_fresh_state(self):
        p = [np.ones(3)]
        state = OptimizerState.adam(0.1)
        adam_step(p, [np.zeros(3)], state)
        assert np.array_equal(p[0], np.ones(3))

    def test_first_step_is_signed_lr(self):
        p = [np.array([1.0, 1.0])]
        g = [np.array([0.3, -4.0])]
        state = OptimizerState.adam(0.05)
        adam_step(p, g, state)
        delta = p[0] - 1.0
        assert np.max(np.abs(delta - (-0.05 * np.sign(g[0])))) < 0.05 * 1e-6

    def test_matches_reference_over_ten_steps(self):
        rng = np.random.default_rng(21)
        params = [rng.standard_normal((3, 2)), rng.standard_normal(4)]
        grads_seq = [
            [rng.standard_normal((3, 2)), rng.standard_normal(4)] for _ in range(10)
        ]
        expected = reference_adam(params, grads_seq, lr=0.01)
        live = [p.copy() for p in params]
        state = OptimizerState.adam(0.01)
        for grads in grads_seq:
            adam_step(live, grads, state)
        for got, want in zip(live, expected):
            assert np.max(np.abs(got - want)) < 1e-12
        assert state.step_count == 10

    def test_buffer_shape_mismatch_detected(self):
        p = [np.ones(3)]
        state = OptimizerState.adam(0.1)
        adam_step(p, [np.ones(3)], state)
        with pytest.raises(ValueError):
            adam_step([np.ones(4)], [np.ones(4)], state)


class TestTopkAccuracy:
    def test_k_equals_classes(self):
        rng = np.random.default_rng(2)
        logits = rng.standard_normal((20, 6))
        labels = rng.integers(0, 6, size=20)
        assert topk_accuracy(logits, labels, 6) == 1.0

    def test_onehot_logits_top1(self):
        labels = np.array([0, 2, 1])
        logits = np.eye(3)[labels]
        assert topk_accuracy(logits, labels, 1) == 1.0

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(4)
        logits = rng.standard_normal((100, 10))
        labels = rng.integers(0, 10, size=100)
        for k in (1, 3, 5):
            hits = 0
            for i in range(100):
                scored = sorted(
                    range(10), key=lambda c: (-logits[i, c], c)
                )[:k]
                hits += labels[i] in scored
            assert topk_accuracy(logits, labels, k) == hits / 100

    def test_tie_prefers_lower_class(self):
        logits = np.array([[1.0, 1.0, 0.0]])
        assert topk_accuracy(logits, [0], 1) == 1.0
        assert topk_accuracy(logits, [1], 1) == 0.0

    def test_k_out_of_range(self):
        with pytest.raises(ValueError):
            topk_accuracy(np.zeros((2, 3)), [0, 1], 4)
        with pytest.raises(ValueError):
            topk_accuracy(np.zeros((2, 3)), [0, 1], 0)


class TestInitMlp:
    def test_deterministic_per_seed(self):
        a = init_mlp([3, 5, 2], ActivationSpec("gelu"), 77)
        b = init_mlp([3, 5, 2], ActivationSpec("gelu"), 77)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa, pb)

    def test_shapes(self):
        m = init_mlp([2, 16, 2], ActivationSpec("molu"), 1)
        assert m.layers[0].weights.shape == (16, 2)
        assert m.layers[1].weights.shape == (2, 16)
        assert m.dims == [2, 16, 2]

    def test_final_layer_is_identity(self):
        m = init_mlp([2, 16, 2], ActivationSpec("molu"), 1)
        assert m.layers[0].activation == ActivationSpec("molu")
        assert m.layers[-1].activation is None

    def test_biases_zero_and_weights_in_bounds(self):
        m = init_mlp([4, 8, 3], ActivationSpec("tanh"), 5)
        for layer in m.layers:
            assert not layer.bias.any()
            lim = math.sqrt(6.0 / layer.weights.shape[1])
            assert np.max(np.abs(layer.weights)) <= lim

    def test_sample_mean_near_zero(self):
        # 10^5 draws, uniform(-lim, lim): SE of the mean = lim/sqrt(3n)
        m = init_mlp([100, 1000, 2], ActivationSpec("relu"), 123)
        w = m.layers[0].weights.ravel()
        lim = math.sqrt(6.0 / 100)
        se = lim / math.sqrt(3 * w.size)
        assert abs(w.mean()) < 3 * se

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            init_mlp([4], ActivationSpec("relu"), 1)
        with pytest.raises(ValueError):
            init_mlp([4, 0, 2], ActivationSpec("relu"), 1)


class TestEndToEndGradients:
    @pytest.mark.parametrize("kind", KINDS)
    def test_mlp_gradients_match_finite_differences(self, kind):
        spec = ActivationSpec(kind)
        model = init_mlp([4, 8, 3], spec, 31)
        prng = SeededPrng(32)
        x = np.array([[prng.uniform(-1.5, 1.5) for _ in range(4)] for _ in range(5)])
        target = np.array([[prng.uniform(-1, 1) for _ in range(3)] for _ in range(5)])

        def loss_of():
            y, _ = mlp_forward(model, x)
            return mse_loss(y, target)[0]

        y, caches = mlp_forward(model, x)
        _, dy = mse_loss(y, target)
        _, grads = mlp_backward(model, caches, dy)
        h = 1e-5
        for par, grad in zip(model.parameters(), grads):
            flat, gflat = par.ravel(), np.asarray(grad).ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                lp = loss_of()
                flat[idx] = orig - h
                lm = loss_of()
                flat[idx] = orig
                fd = (lp - lm) / (2 * h)
                diff = abs(fd - gflat[idx])
                assert diff <= 1e-8 or diff <= 1e-5 * max(abs(fd), abs(gflat[idx])), (
                    f"{kind}: param grad {gflat[idx]} vs fd {fd}"
                )


class TestTrainingDeterminism:
    def _train(self):
        model = init_mlp([4, 8, 3], ActivationSpec("molu"), 42)
        params = model.parameters()
        state = OptimizerState.sgd_momentum(0.01, 0.5)
        prng = SeededPrng(42)
        x = np.array([[prng.uniform(-1, 1) for _ in range(4)] for _ in range(16)])
        labels = [prng.randbelow(3) for _ in range(16)]
        for _ in range(20):
            logits, caches = mlp_forward(model, x)
            _, dlogits = softmax_cross_entropy(logits, labels)
            _, grads = mlp_backward(model, caches, dlogits)
            sgd_momentum_step(params, grads, state)
        return [p.copy() for p in params]

    def test_bit_identical_parameters(self):
        a = self._train()
        b = self._train()
        for pa, pb in zip(a, b):
            assert np.array_equal(pa, pb)


class TestLossDescent:
    def test_small_sgd_step_does_not_increase_batch_loss(self):
        model = init_mlp([4, 8, 3], ActivationSpec("silu"), 9)
        params = model.parameters()
        prng = SeededPrng(10)
        x = np.array([[prng.uniform(-1, 1) for _ in range(4)] for _ in range(8)])
        target = np.array([[prng.uniform(-1, 1) for _ in range(3)] for _ in range(8)])
        y, caches = mlp_forward(model, x)
        before, dy = mse_loss(y, target)
        _, grads = mlp_backward(model, caches, dy)
        sgd_momentum_step(params, grads, OptimizerState.sgd_momentum(1e-4, 0.0))
        after, _ = mse_loss(mlp_forward(model, x)[0], target)
        assert after <= before
