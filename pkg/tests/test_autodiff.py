"""Differentiation contract: every op's reverse-mode gradient must agree
with central finite differences, and gradients must be linear in the loss."""

import numpy as np
import pytest

from predgen import autodiff as ad
from predgen.autodiff import ShapeError, Tensor
from predgen.linalg import finite_diff_grad


def grad_of(fn, x0: np.ndarray) -> np.ndarray:
    """Reverse-mode gradient of a scalar-valued tensor function at x0."""
    x = Tensor(x0.copy(), requires_grad=True)
    fn(x).backward()
    return x.grad


def check_against_fd(fn, x0, rtol=1e-5, h=1e-6):
    got = grad_of(fn, x0)
    want = finite_diff_grad(lambda a: fn(Tensor(a)).item(), x0.copy(), h=h)
    scale = max(1.0, float(np.abs(want).max()))
    np.testing.assert_allclose(got, want, atol=rtol * scale, rtol=rtol)


class TestMatmul:
    def test_identity(self):
        a = np.arange(6.0).reshape(2, 3)
        out = ad.matmul(Tensor(np.eye(2)), Tensor(a))
        np.testing.assert_array_equal(out.data, a)

    def test_hand_multiplication(self):
        out = ad.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[0.0], [1.0]]))
        np.testing.assert_array_equal(out.data, [[2.0], [4.0]])

    def test_zero_matrix(self):
        a = np.random.default_rng(0).normal(size=(3, 3))
        out = ad.matmul(Tensor(np.zeros((2, 3))), Tensor(a))
        np.testing.assert_array_equal(out.data, np.zeros((2, 3)))

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_associativity(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a = rng.normal(size=(3, 4))
            b = rng.normal(size=(4, 5))
            c = rng.normal(size=(5, 2))
            left = (a @ b) @ c
            right = a @ (b @ c)
            assert np.abs(left - right).max() <= 1e-10 * max(
                1.0, np.abs(left).max()
            )

    def test_batched_gradient(self):
        rng = np.random.default_rng(3)
        b = rng.normal(size=(2, 4, 3))
        check_against_fd(
            lambda x: ad.matmul(x, Tensor(b)).sum(), rng.normal(size=(2, 5, 4))
        )


class TestElementwiseGradients:
    """Each differentiable op versus the finite-difference oracle at 100
    random points, sampled away from non-smooth loci."""

    CASES = {
        "add": lambda x: (x + x * 2.0).sum(),
        "mul": lambda x: (x * x).sum(),
        "div": lambda x: (1.0 / (x * x + 1.0)).sum(),
        "pow": lambda x: (x**3).sum(),
        "exp": lambda x: ad.exp(x).sum(),
        "log": lambda x: ad.log(x * x + 1.0).sum(),
        "tanh": lambda x: ad.tanh(x).sum(),
        "gelu": lambda x: ad.gelu(x).sum(),
        "softmax": lambda x: (ad.softmax(x) * ad.softmax(x)).sum(),
        "log_softmax": lambda x: (ad.log_softmax(x) * 0.5).sum(),
        "layer_norm": lambda x: (ad.layer_norm(x) ** 2).sum(),
        "mean": lambda x: (x * x).mean(),
        "reshape": lambda x: (x.reshape(-1) ** 2).sum(),
        "slice": lambda x: (x[1:] * 3.0).sum(),
    }

    @pytest.mark.parametrize("name", sorted(CASES))
    def test_matches_finite_differences(self, name):
        rng = np.random.default_rng(hash(name) % 2**32)
        fn = self.CASES[name]
        for _ in range(100):
            x0 = rng.normal(size=(3, 4)) * 1.5
            check_against_fd(fn, x0)

    def test_maximum_off_tie(self):
        rng = np.random.default_rng(11)
        a0 = rng.normal(size=(4,)) + 3.0  # keep a clear winner per entry
        b0 = rng.normal(size=(4,)) - 3.0
        check_against_fd(lambda x: ad.maximum(x, Tensor(b0)).sum(), a0)

    def test_maximum_tie_splits_half(self):
        a = Tensor(np.array([2.0, 2.0]), requires_grad=True)
        b = Tensor(np.array([2.0, 5.0]), requires_grad=True)
        ad.maximum(a, b).sum().backward()
        np.testing.assert_array_equal(a.grad, [0.5, 0.0])
        np.testing.assert_array_equal(b.grad, [0.5, 1.0])

    def test_absolute_zero_subgradient(self):
        x = Tensor(np.array([0.0, -2.0, 3.0]), requires_grad=True)
        ad.absolute(x).sum().backward()
        np.testing.assert_array_equal(x.grad, [0.0, -1.0, 1.0])

    def test_take_rows_accumulates_repeats(self):
        table = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
        out = ad.take_rows(table, np.array([1, 1, 2]))
        out.sum().backward()
        np.testing.assert_array_equal(table.grad, [[0, 0], [2, 2], [1, 1]])

    def test_gather_last_gradient(self):
        rng = np.random.default_rng(5)
        idx = rng.integers(0, 4, size=(2, 3))
        check_against_fd(
            lambda x: (ad.gather_last(x, idx) ** 2).sum(), rng.normal(size=(2, 3, 4))
        )


class TestTapeSemantics:
    def test_gradient_of_sum_is_sum_of_gradients(self):
        rng = np.random.default_rng(13)
        x0 = rng.normal(size=(4, 3))
        f = lambda x: (x * x).sum()
        g = lambda x: ad.exp(x * 0.3).sum()
        grad_sum = grad_of(lambda x: f(x) + g(x), x0)
        np.testing.assert_allclose(grad_sum, grad_of(f, x0) + grad_of(g, x0), rtol=1e-12)

    def test_reused_tensor_accumulates(self):
        x = Tensor(np.array(3.0), requires_grad=True)
        (x * x).backward()
        assert x.grad == pytest.approx(6.0)

    def test_backward_requires_scalar(self):
        x = Tensor(np.zeros((2, 2)), requires_grad=True)
        with pytest.raises(ShapeError):
            (x * 2.0).backward()

    def test_no_grad_suppresses_graph(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            out = (x * 2.0).sum()
        assert not out.requires_grad
        assert out._backward is None

    def test_detach_cuts_graph(self):
        x = Tensor(np.ones(3), requires_grad=True)
        out = (x.detach() * 2.0).sum()
        assert not out.requires_grad

    def test_grad_shapes_match_parameters(self):
        shapes = [(3,), (2, 4), (2, 3, 4)]
        for shape in shapes:
            x = Tensor(np.ones(shape), requires_grad=True)
            (x * 2.0).sum().backward()
            assert x.grad.shape == shape

    def test_broadcast_gradients_unbroadcast(self):
        a = Tensor(np.ones((3, 1)), requires_grad=True)
        b = Tensor(np.ones((1, 4)), requires_grad=True)
        (a * b).sum().backward()
        np.testing.assert_array_equal(a.grad, np.full((3, 1), 4.0))
        np.testing.assert_array_equal(b.grad, np.full((1, 4), 3.0))
