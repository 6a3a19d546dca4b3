"""Forward/backward math, the optimizer, the schedule, and gradient checking."""

from __future__ import annotations

import math

import numpy as np
import pytest

from hdlkit.nn import (
    AdamWState,
    DenseLayer,
    GradCheckReport,
    LrSchedule,
    NumericsError,
    adamw_step,
    blockwise_softmax_xent,
    grad_check,
    lr_at_step,
    mlp_backward,
    mlp_forward,
    softmax,
)


class TestMlpForward:
    def test_identity_layer(self):
        layer = DenseLayer(weight=np.eye(3), bias=np.zeros(3))
        x = np.array([[1.0, -2.0, 0.5]])
        out, _ = mlp_forward([layer], x)
        assert np.array_equal(out, x)

    def test_zero_input_zero_bias(self):
        rng = np.random.default_rng(0)
        layers = [DenseLayer(rng.normal(size=(4, 3)), np.zeros(4)),
                  DenseLayer(rng.normal(size=(2, 4)), np.zeros(2))]
        out, _ = mlp_forward(layers, np.zeros((5, 3)))
        assert not out.any()

    def test_hand_multiplied_2x2(self):
        layer = DenseLayer(weight=np.array([[1.0, 2.0], [3.0, 4.0]]), bias=np.array([0.5, -0.5]))
        out, _ = mlp_forward([layer], np.array([[1.0, 1.0]]))
        assert np.allclose(out, [[3.5, 6.5]])

    def test_shape_mismatch_errors(self):
        layer = DenseLayer(weight=np.eye(3), bias=np.zeros(3))
        with pytest.raises(NumericsError):
            mlp_forward([layer], np.zeros((1, 4)))

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        layers = [DenseLayer(rng.normal(size=(6, 4)), rng.normal(size=6)),
                  DenseLayer(rng.normal(size=(3, 6)), rng.normal(size=3))]
        x = rng.normal(size=(5, 4))
        target = rng.normal(size=(5, 3))

        def loss_fn(params):
            ls = [DenseLayer(params["w0"], params["b0"]), DenseLayer(params["w1"], params["b1"])]
            out, cache = mlp_forward(ls, x)
            loss = 0.5 * float(np.sum((out - target) ** 2))
            grads, _ = mlp_backward(ls, cache, out - target)
            return loss, {"w0": grads[0][0], "b0": grads[0][1], "w1": grads[1][0], "b1": grads[1][1]}

        params = {"w0": layers[0].weight, "b0": layers[0].bias,
                  "w1": layers[1].weight, "b1": layers[1].bias}
        report = grad_check(loss_fn, params)
        assert report.max_rel_err < 1e-6


class TestBlockwiseSoftmaxXent:
    def test_ln2_hand_case(self):
        losses, grad = blockwise_softmax_xent(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]), [2])
        assert losses[0, 0] == pytest.approx(math.log(2), abs=1e-12)
        assert np.allclose(grad, [[-0.5, 0.5]], atol=1e-12)

    def test_all_zero_target_contributes_nothing(self):
        logits = np.array([[1.0, -2.0, 0.3]])
        losses, grad = blockwise_softmax_xent(logits, np.zeros((1, 3)), [3])
        assert losses[0, 0] == 0.0
        assert not grad.any()

    def test_fractional_target_uniform_logits(self):
        losses, _ = blockwise_softmax_xent(np.array([[5.0, 5.0]]), np.array([[2 / 3, 1 / 3]]), [2])
        assert losses[0, 0] == pytest.approx(math.log(2), abs=1e-12)

    def test_softmax_positive_and_normalized(self):
        rng = np.random.default_rng(2)
        z = rng.normal(scale=30.0, size=(50, 7))
        q = softmax(z)
        assert np.all(q > 0)
        assert np.allclose(q.sum(axis=1), 1.0, atol=1e-12)

    def test_ce_minus_entropy_is_nonnegative(self):
        # CE(p, q) - H(p) = KL(p||q) >= 0, equality iff p = q.
        rng = np.random.default_rng(3)
        for _ in range(200):
            p = rng.dirichlet(np.ones(5))
            z = rng.normal(size=5)
            q = softmax(z[None, :])[0]
            ce = float(blockwise_softmax_xent(z[None, :], p[None, :], [5])[0][0, 0])
            h = -float(np.sum(p * np.log(p, where=p > 0, out=np.zeros_like(p))))
            assert ce - h >= -1e-12
        p = softmax(np.array([[0.3, -1.2, 0.8]]))[0]
        z = np.log(p)[None, :]
        ce = float(blockwise_softmax_xent(z, p[None, :], [3])[0][0, 0])
        h = -float(np.sum(p * np.log(p)))
        assert abs(ce - h) < 1e-9

    def test_multi_block_gradient_matches_fd(self):
        rng = np.random.default_rng(4)
        sizes = [2, 4, 5, 5, 5]
        x = rng.normal(size=(3, 21))
        t = np.zeros((3, 21))
        t[:, :2] = rng.dirichlet(np.ones(2), size=3)
        start = 2
        for size in sizes[1:]:
            t[:2, start : start + size] = rng.dirichlet(np.ones(size), size=2)
            start += size  # third row left all-zero in fine-grained blocks

        def loss_fn(params):
            losses, grad = blockwise_softmax_xent(params["z"], t, sizes)
            return float(losses.sum()), {"z": grad}

        report = grad_check(loss_fn, {"z": x})
        assert report.max_rel_err < 1e-6

    def test_nonfinite_logits_error(self):
        with pytest.raises(NumericsError):
            blockwise_softmax_xent(np.array([[np.nan, 0.0]]), np.array([[1.0, 0.0]]), [2])


class TestAdamW:
    def test_first_step_hand_case(self):
        params = {"w": np.array([0.0])}
        state = AdamWState.init(params)
        adamw_step(state, params, {"w": np.array([1.0])}, 0.1)
        assert params["w"][0] == pytest.approx(-0.1, abs=1e-7)

    def test_zero_gradient_leaves_params(self):
        params = {"w": np.array([1.5, -2.0])}
        state = AdamWState.init(params)
        adamw_step(state, params, {"w": np.zeros(2)}, 0.1)
        assert np.array_equal(params["w"], [1.5, -2.0])

    def test_zero_decay_matches_plain_adam(self):
        rng = np.random.default_rng(5)
        w0 = rng.normal(size=6)
        grads = [rng.normal(size=6) for _ in range(10)]

        params = {"w": w0.copy()}
        state = AdamWState.init(params)
        for g in grads:
            adamw_step(state, params, {"w": g}, 0.05)

        # Plain Adam reference, written independently.
        m = np.zeros(6)
        v = np.zeros(6)
        w = w0.copy()
        for t, g in enumerate(grads, start=1):
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            m_hat = m / (1 - 0.9**t)
            v_hat = v / (1 - 0.999**t)
            w -= 0.05 * m_hat / (np.sqrt(v_hat) + 1e-8)
        assert np.allclose(params["w"], w, atol=1e-12)

    def test_decoupled_decay_term(self):
        params = {"w": np.array([2.0])}
        state = AdamWState.init(params, weight_decay=0.1)
        adamw_step(state, params, {"w": np.array([0.0])}, 0.5)
        # Zero gradient: only the decay term moves the weight: 2 - 0.5*0.1*2.
        assert params["w"][0] == pytest.approx(1.9, abs=1e-12)

    def test_bitwise_determinism(self):
        rng = np.random.default_rng(6)
        w0 = rng.normal(size=(3, 3)).astype(np.float32)
        g = rng.normal(size=(3, 3)).astype(np.float32)
        outs = []
        for _ in range(2):
            params = {"w": w0.copy()}
            state = AdamWState.init(params)
            for _ in range(5):
                adamw_step(state, params, {"w": g}, 0.01)
            outs.append(params["w"].copy())
        assert np.array_equal(outs[0], outs[1])

    def test_shape_mismatch_error(self):
        params = {"w": np.zeros(3)}
        state = AdamWState.init(params)
        with pytest.raises(NumericsError):
            adamw_step(state, params, {"w": np.zeros(4)}, 0.1)


class TestLrSchedule:
    def test_spec_points(self):
        s = LrSchedule(total_steps=100, base_lr=2e-5, warmup_ratio=0.1)
        assert lr_at_step(s, 5) == pytest.approx(1.0e-5, abs=1e-18)
        assert lr_at_step(s, 0) == 0.0
        assert lr_at_step(s, 55) == pytest.approx(1.0e-5, abs=1e-18)
        assert lr_at_step(s, 10) == 2e-5
        assert lr_at_step(s, 100) == 0.0

    def test_piecewise_linear_and_peak(self):
        s = LrSchedule(total_steps=200, base_lr=1e-3, warmup_ratio=0.25)
        values = [lr_at_step(s, i) for i in range(201)]
        assert max(values) == 1e-3
        assert values.index(max(values)) == s.warmup_steps
        ramps = np.diff(values[: s.warmup_steps + 1])
        decays = np.diff(values[s.warmup_steps :])
        assert np.allclose(ramps, ramps[0])
        assert np.allclose(decays, decays[0])

    def test_out_of_range_step_errors(self):
        s = LrSchedule(total_steps=10)
        with pytest.raises(NumericsError):
            lr_at_step(s, 11)
        with pytest.raises(NumericsError):
            lr_at_step(s, -1)

    def test_invalid_ratio(self):
        with pytest.raises(NumericsError):
            LrSchedule(total_steps=10, warmup_ratio=1.0)

    def test_warmup_ceil_is_exact_for_binary_ratios(self):
        assert LrSchedule(total_steps=100, warmup_ratio=0.1).warmup_steps == 10
        assert LrSchedule(total_steps=30, warmup_ratio=0.1).warmup_steps == 3
        assert LrSchedule(total_steps=35, warmup_ratio=0.1).warmup_steps == 4  # ceil(3.5)


class TestGradCheck:
    def test_quadratic(self):
        def loss_fn(params):
            theta = params["t"]
            return float(np.sum(theta**2)), {"t": 2 * theta}

        report = grad_check(loss_fn, {"t": np.array([3.0])})
        assert isinstance(report, GradCheckReport)
        assert report.max_rel_err < 1e-9

    def test_detects_wrong_gradient(self):
        def loss_fn(params):
            theta = params["t"]
            return float(np.sum(theta**2)), {"t": 3 * theta}  # wrong factor

        report = grad_check(loss_fn, {"t": np.array([3.0])})
        assert report.max_rel_err > 0.1

    def test_samples_at_least_64_coords_per_tensor(self):
        def loss_fn(params):
            theta = params["t"]
            return float(np.sum(theta**2)), {"t": 2 * theta}

        report = grad_check(loss_fn, {"t": np.ones((40, 40))})
        assert report.n_coords_checked == 64

    def test_nonfinite_loss_errors(self):
        def loss_fn(params):
            return float("nan"), {"t": params["t"]}

        with pytest.raises(NumericsError):
            grad_check(loss_fn, {"t": np.ones(2)})
