import numpy as np
import pytest

from lfgan.autodiff import Var, as_var, backward, concat, softmax_cross_entropy


def numeric_grad(f, x, eps=1e-6):
    """Central finite differences of scalar-valued f at x, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return g


def check_op(build, x0, rtol=1e-5, atol=1e-8):
    """Analytic vs numeric gradient for a scalar graph built from one leaf."""
    leaf = Var(np.array(x0, dtype=np.float64))
    out = build(leaf)
    backward(out)
    num = numeric_grad(lambda x: float(build(Var(x)).value), np.array(x0, dtype=np.float64))
    np.testing.assert_allclose(leaf.grad, num, rtol=rtol, atol=atol)


class TestPrimitiveGrads:
    def test_affine(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=(3, 4))
        b = rng.normal(size=(1, 4))
        check_op(lambda x: ((x @ as_var(w) + as_var(b)) ** 2).sum(), rng.normal(size=(2, 3)))

    def test_matmul_both_sides(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 3))
        w0 = rng.normal(size=(3, 2))
        check_op(lambda v: (as_var(x) @ v).sum(), w0)
        check_op(lambda v: ((v @ as_var(w0)) ** 2).sum(), x)

    def test_tanh(self):
        check_op(lambda x: x.tanh().sum(), np.linspace(-2, 2, 7))

    def test_relu(self):
        # stay away from the kink at 0 where FD is ill-defined
        check_op(lambda x: (x.relu() * x.relu()).sum(), [-1.5, -0.4, 0.3, 2.0])

    def test_hadamard(self):
        rng = np.random.default_rng(2)
        other = rng.normal(size=(3, 3))
        check_op(lambda x: (x * as_var(other)).sum(), rng.normal(size=(3, 3)))

    def test_mean_full_and_axis(self):
        rng = np.random.default_rng(3)
        check_op(lambda x: x.mean(), rng.normal(size=(4, 5)))
        check_op(lambda x: (x.mean(axis=0) ** 2).sum(), rng.normal(size=(4, 5)))
        check_op(lambda x: (x.mean(axis=1) ** 2).sum(), rng.normal(size=(4, 5)))

    def test_sum_axis(self):
        rng = np.random.default_rng(4)
        check_op(lambda x: (x.sum(axis=1) ** 2).sum(), rng.normal(size=(3, 4)))

    def test_exp_log(self):
        check_op(lambda x: x.exp().sum(), [-0.5, 0.0, 1.2])
        check_op(lambda x: x.log().sum(), [0.3, 1.0, 4.2])

    def test_pow(self):
        check_op(lambda x: (x ** 3).sum(), [-1.2, 0.5, 2.0])

    def test_div(self):
        check_op(lambda x: (1.0 / x).sum(), [0.5, 2.0, -1.5])

    def test_softmax_cross_entropy(self):
        rng = np.random.default_rng(5)
        labels = np.array([2, 0, 1, 3])
        check_op(lambda x: softmax_cross_entropy(x, labels), rng.normal(size=(4, 5)))

    def test_slice(self):
        rng = np.random.default_rng(6)
        check_op(lambda x: (x[:, 1:3] ** 2).sum(), rng.normal(size=(3, 5)))

    def test_reshape(self):
        rng = np.random.default_rng(7)
        check_op(lambda x: (x.reshape(2, 6) ** 2).sum(axis=1).sum(), rng.normal(size=(3, 4)))

    def test_concat(self):
        rng = np.random.default_rng(8)
        other = rng.normal(size=(2, 3))
        check_op(lambda x: (concat([x, as_var(other)], axis=1) ** 2).sum(),
                 rng.normal(size=(2, 2)))

    def test_broadcast_add(self):
        rng = np.random.default_rng(9)
        big = rng.normal(size=(4, 3))
        check_op(lambda x: ((as_var(big) + x) ** 2).sum(), rng.normal(size=(1, 3)))

    def test_broadcast_mul(self):
        rng = np.random.default_rng(10)
        big = rng.normal(size=(4, 3))
        check_op(lambda x: ((as_var(big) * x) ** 2).sum(), rng.normal(size=(1, 3)))


class TestContracts:
    def test_sum_of_squares_gradient(self):
        p = Var([1.0, -2.0, 3.0])
        backward((p ** 2).sum())
        np.testing.assert_allclose(p.grad, [2.0, -4.0, 6.0])

    def test_two_backwards_double_leaf_grads(self):
        p = Var([[1.0, 2.0], [3.0, 4.0]])
        loss = ((p @ Var(np.eye(2))).tanh() ** 2).mean()
        backward(loss)
        once = p.grad.copy()
        backward(loss)
        np.testing.assert_allclose(p.grad, 2.0 * once, rtol=1e-14)

    def test_shared_subexpression(self):
        x = Var([2.0])
        y = x * x  # used twice below
        backward((y + y).sum())
        np.testing.assert_allclose(x.grad, [8.0])

    def test_nonscalar_root_rejected(self):
        with pytest.raises(ValueError):
            backward(Var([1.0, 2.0]))

    def test_nan_forward_names_op(self):
        with np.errstate(invalid="ignore"):
            with pytest.raises(FloatingPointError, match="log"):
                Var([-1.0]).log()

    def test_inf_forward_names_op(self):
        with np.errstate(over="ignore"):
            with pytest.raises(FloatingPointError, match="exp"):
                Var([1000.0]).exp()

    def test_matmul_requires_2d(self):
        with pytest.raises(ValueError):
            Var([1.0, 2.0]) @ Var([[1.0], [2.0]])

    def test_pow_rejects_var_exponent(self):
        with pytest.raises(TypeError):
            Var([2.0]) ** Var([3.0])

    def test_deep_chain_no_recursion_limit(self):
        x = Var(np.ones((1, 1)))
        y = x
        for _ in range(5000):
            y = y + 1.0
        backward(y.sum())
        np.testing.assert_allclose(x.grad, [[1.0]])
