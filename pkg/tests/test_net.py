import numpy as np
import pytest

from gaussfield.core import DomainError
from gaussfield.net import (
    Mlp,
    adam_init,
    adam_step,
    build_mlp,
    mlp_backward,
    mlp_forward,
    param_count,
    sigmoid,
    smooth_l1,
    smooth_l1_grad,
)


def scalar_forward(mlp, x):
    """Naive scalar-loop reference forward pass."""
    h = list(x)
    last = len(mlp.weights) - 1
    for li, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = []
        for o in range(w.shape[0]):
            acc = b[o]
            for i in range(w.shape[1]):
                acc += w[o, i] * h[i]
            z.append(acc)
        if li == last:
            h = [1.0 / (1.0 + np.exp(-v)) for v in z]
        else:
            h = [max(v, 0.0) for v in z]
    return np.array(h)


class TestForward:
    def test_zero_parameters_give_half(self):
        mlp = Mlp(widths=(4, 8, 3), theta=np.zeros(param_count((4, 8, 3))))
        out, _ = mlp_forward(mlp, np.zeros((2, 4)))
        np.testing.assert_allclose(out, 0.5)

    def test_single_layer_bias_only(self):
        widths = (3, 2)
        theta = np.zeros(param_count(widths))
        mlp = Mlp(widths=widths, theta=theta)
        mlp.biases[0][:] = [1.3, -0.4]
        out, _ = mlp_forward(mlp, np.zeros((1, 3)))
        np.testing.assert_allclose(out[0], sigmoid(np.array([1.3, -0.4])), atol=1e-15)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(0)
        mlp = build_mlp((5, 7, 7, 3), rng)
        for _ in range(10):
            x = rng.normal(size=5)
            out, _ = mlp_forward(mlp, x[None, :])
            np.testing.assert_allclose(out[0], scalar_forward(mlp, x), atol=1e-6)

    def test_dimension_mismatch(self):
        mlp = build_mlp((4, 3), np.random.default_rng(1))
        with pytest.raises(DomainError):
            mlp_forward(mlp, np.zeros((1, 5)))

    def test_output_in_open_unit_interval(self):
        rng = np.random.default_rng(2)
        mlp = build_mlp((4, 16, 2), rng)
        out, _ = mlp_forward(mlp, rng.normal(size=(50, 4)))
        assert np.all(out > 0) and np.all(out < 1)


class TestBackward:
    def test_zero_upstream_zero_grads(self):
        rng = np.random.default_rng(3)
        mlp = build_mlp((4, 6, 2), rng)
        out, cache = mlp_forward(mlp, rng.normal(size=(3, 4)))
        g_theta, g_in = mlp_backward(mlp, cache, np.zeros_like(out))
        assert not np.any(g_theta)
        assert not np.any(g_in)

    def test_single_layer_outer_product(self):
        # One linear layer + sigmoid: dL/dW = (upstream * sigma') x input.
        rng = np.random.default_rng(4)
        mlp = build_mlp((3, 2), rng)
        x = rng.normal(size=(1, 3))
        out, cache = mlp_forward(mlp, x)
        upstream = np.array([[1.0, -2.0]])
        g_theta, g_in = mlp_backward(mlp, cache, upstream)
        dz = upstream * out * (1 - out)
        expected_w = dz.T @ x
        gw, gb = g_theta[:6].reshape(2, 3), g_theta[6:]
        np.testing.assert_allclose(gw, expected_w, atol=1e-12)
        np.testing.assert_allclose(gb, dz[0], atol=1e-12)
        np.testing.assert_allclose(g_in, dz @ mlp.weights[0], atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        mlp = build_mlp((4, 8, 8, 3), rng)
        x = rng.normal(size=(5, 4))
        upstream = rng.normal(size=(5, 3))

        out, cache = mlp_forward(mlp, x)
        g_theta, g_in = mlp_backward(mlp, cache, upstream)

        h = 1e-6
        idx = rng.choice(mlp.theta.size, size=60, replace=False)
        for p in idx:
            mlp.theta[p] += h
            up_val = float(np.sum(mlp_forward(mlp, x)[0] * upstream))
            mlp.theta[p] -= 2 * h
            down_val = float(np.sum(mlp_forward(mlp, x)[0] * upstream))
            mlp.theta[p] += h
            fd = (up_val - down_val) / (2 * h)
            denom = max(abs(fd), abs(g_theta[p]), 1e-10)
            assert abs(fd - g_theta[p]) / denom < 1e-5

        # Input gradient by finite differences too.
        for (b, i) in [(0, 0), (2, 3), (4, 1)]:
            x[b, i] += h
            up_val = float(np.sum(mlp_forward(mlp, x)[0] * upstream))
            x[b, i] -= 2 * h
            down_val = float(np.sum(mlp_forward(mlp, x)[0] * upstream))
            x[b, i] += h
            fd = (up_val - down_val) / (2 * h)
            denom = max(abs(fd), abs(g_in[b, i]), 1e-10)
            assert abs(fd - g_in[b, i]) / denom < 1e-5

    def test_missing_cache(self):
        mlp = build_mlp((2, 2), np.random.default_rng(6))
        with pytest.raises(DomainError):
            mlp_backward(mlp, None, np.zeros((1, 2)))


class TestSmoothL1:
    def test_zero_residual(self):
        assert smooth_l1(np.zeros(5), np.zeros(5), beta=1.0) == 0.0

    def test_quadratic_branch(self):
        assert smooth_l1(np.array([0.5]), np.array([0.0]), beta=1.0) == pytest.approx(0.125)

    def test_linear_branch(self):
        assert smooth_l1(np.array([2.0]), np.array([0.0]), beta=1.0) == pytest.approx(1.5)

    def test_continuous_at_boundary(self):
        for beta in (0.5, 1.0, 2.0):
            below = smooth_l1(np.array([beta - 1e-10]), np.zeros(1), beta)
            above = smooth_l1(np.array([beta + 1e-10]), np.zeros(1), beta)
            assert abs(below - above) < 1e-9

    def test_nonnegative_and_zero_iff_equal(self):
        rng = np.random.default_rng(7)
        a, b = rng.normal(size=20), rng.normal(size=20)
        assert smooth_l1(a, b, 1.0) > 0
        assert smooth_l1(a, a, 1.0) == 0.0

    def test_grad_zero_at_zero(self):
        g = smooth_l1_grad(np.zeros(4), np.zeros(4), beta=1.0)
        assert not np.any(g)

    def test_grad_continuous_at_boundary(self):
        beta = 0.7
        g_below = smooth_l1_grad(np.array([beta - 1e-12]), np.zeros(1), beta)
        g_above = smooth_l1_grad(np.array([beta + 1e-12]), np.zeros(1), beta)
        np.testing.assert_allclose(g_below, g_above, atol=1e-9)
        np.testing.assert_allclose(g_above, [1.0], atol=1e-9)

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        pred = rng.normal(scale=1.5, size=12)
        target = rng.normal(scale=1.5, size=12)
        beta = 0.9
        g = smooth_l1_grad(pred, target, beta)
        h = 1e-7
        for i in range(12):
            pred[i] += h
            up = smooth_l1(pred, target, beta)
            pred[i] -= 2 * h
            down = smooth_l1(pred, target, beta)
            pred[i] += h
            assert abs((up - down) / (2 * h) - g[i]) < 1e-6

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            smooth_l1(np.zeros(3), np.zeros(4), 1.0)


def reference_adam(params, grad_fn, lr, steps):
    """Independently coded Adam for trajectory comparison."""
    p = params.copy()
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    beta1, beta2, eps = 0.9, 0.999, 1e-15
    for t in range(1, steps + 1):
        g = grad_fn(p)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        p = p - lr * mhat / (np.sqrt(vhat) + eps)
    return p


class TestAdam:
    def test_zero_grad_fresh_state_no_move(self):
        p = np.array([1.0, -2.0, 3.0])
        state = adam_init(p, lr=0.1)
        adam_step(p, np.zeros(3), state)
        np.testing.assert_array_equal(p, [1.0, -2.0, 3.0])

    def test_first_step_is_signed_lr(self):
        p = np.zeros(4)
        g = np.array([0.3, -0.7, 12.0, -1e-4])
        state = adam_init(p, lr=0.05)
        adam_step(p, g, state)
        np.testing.assert_allclose(p, -0.05 * np.sign(g), atol=1e-9)

    def test_trajectory_matches_reference(self):
        # Quadratic bowl: f(p) = 0.5 * sum(c * p^2), grad = c * p
        c = np.array([1.0, 4.0, 0.25, 9.0])
        p0 = np.array([2.0, -1.0, 3.0, 0.5])

        p = p0.copy()
        state = adam_init(p, lr=0.02)
        for _ in range(100):
            adam_step(p, c * p, state)
        ref = reference_adam(p0, lambda q: c * q, lr=0.02, steps=100)
        np.testing.assert_allclose(p, ref, atol=1e-10)

    def test_lr_zero_is_identity(self):
        rng = np.random.default_rng(9)
        p = rng.normal(size=6)
        before = p.copy()
        state = adam_init(p, lr=0.0)
        adam_step(p, rng.normal(size=6), state)
        np.testing.assert_array_equal(p, before)

    def test_shape_mismatch(self):
        p = np.zeros(3)
        state = adam_init(p, lr=0.1)
        with pytest.raises(DomainError):
            adam_step(p, np.zeros(4), state)

    def test_multidimensional_params(self):
        p = np.zeros((2, 3, 4))
        state = adam_init(p, lr=0.1)
        g = np.ones_like(p)
        adam_step(p, g, state)
        np.testing.assert_allclose(p, -0.1, atol=1e-9)
