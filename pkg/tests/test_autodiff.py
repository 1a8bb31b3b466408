import numpy as np
import numpy.testing as npt
import pytest

from sentseg import autodiff as ad
from sentseg.autodiff import Tensor, backward, finite_diff_check, zero_grads
from sentseg.errors import GradCheckError, InvalidInputError, ShapeError


class TestForwardPrimitives:
    def test_softmax_symmetry(self):
        out = ad.softmax(Tensor([0.0, 0.0]))
        npt.assert_allclose(out.data, [0.5, 0.5])

    def test_concat(self):
        out = ad.concat([Tensor([1.0]), Tensor([2.0, 3.0])])
        npt.assert_array_equal(out.data, [1.0, 2.0, 3.0])

    def test_matmul_identity(self):
        v = np.array([1.5, -2.0, 0.25])
        out = ad.matmul(Tensor(np.eye(3)), Tensor(v))
        npt.assert_array_equal(out.data, v)

    def test_shape_mismatch_names_shapes(self):
        with pytest.raises(ShapeError, match=r"matmul"):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
        with pytest.raises(ShapeError, match=r"add"):
            ad.add(Tensor(np.zeros(2)), Tensor(np.zeros(3)))

    def test_dropout_masks_and_scales(self):
        x = Tensor(np.ones(4))
        mask = np.array([1.0, 0.0, 1.0, 0.0])
        out = ad.dropout(x, mask, rate=0.5)
        npt.assert_allclose(out.data, [2.0, 0.0, 2.0, 0.0])

    def test_gather_out_of_range(self):
        table = Tensor(np.zeros((3, 2)))
        with pytest.raises(InvalidInputError):
            ad.gather_rows(table, np.array([3]))

    def test_narrow_round_trip(self):
        x = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
        mid = ad.narrow(x, 1, 1, 2)
        npt.assert_array_equal(mid.data, x.data[:, 1:3])
        backward(ad.sum_(mid))
        expect = np.zeros((3, 4))
        expect[:, 1:3] = 1.0
        npt.assert_array_equal(x.grad, expect)


class TestBackward:
    def test_square_gradient(self):
        x = Tensor(3.0, requires_grad=True)
        backward(ad.mul(x, x))
        assert x.grad == 6.0

    def test_constant_loss_gives_zero_grads(self):
        x = Tensor(np.ones(3), requires_grad=True)
        loss = Tensor(5.0)
        backward(loss, params=[x])
        npt.assert_array_equal(x.grad, np.zeros(3))

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(InvalidInputError):
            backward(ad.mul(x, x))

    def test_unreachable_param_zero(self):
        x = Tensor(2.0, requires_grad=True)
        y = Tensor(4.0, requires_grad=True)
        backward(ad.mul(x, x), params=[x, y])
        npt.assert_array_equal(y.grad, 0.0)

    def test_rerun_reproduces_gradients(self):
        rng = np.random.default_rng(3)
        w = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        x = Tensor(rng.normal(size=(2, 3)))

        def run():
            zero_grads([w])
            backward(ad.sum_(ad.tanh(ad.matmul(x, w))))
            return w.grad.copy()

        npt.assert_array_equal(run(), run())

    def test_two_layer_net_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        w1 = Tensor(rng.uniform(-1, 1, (4, 6)), requires_grad=True)
        b1 = Tensor(rng.uniform(-1, 1, 6), requires_grad=True)
        w2 = Tensor(rng.uniform(-1, 1, (6, 3)), requires_grad=True)
        x = rng.uniform(-1, 1, (5, 4))

        def fn():
            h = ad.tanh(ad.add(ad.matmul(Tensor(x), w1), b1))
            return ad.mean_(ad.softmax(ad.matmul(h, w2), axis=-1))

        assert finite_diff_check(fn, [w1, b1, w2], eps=1e-5) < 1e-4


class TestFiniteDiffCheck:
    def test_linear_layer_tight(self):
        rng = np.random.default_rng(0)
        w = Tensor(rng.uniform(-1, 1, (3, 2)), requires_grad=True)
        x = rng.uniform(-1, 1, (4, 3))

        def fn():
            return ad.sum_(ad.matmul(Tensor(x), w))

        assert finite_diff_check(fn, [w], eps=1e-5) < 1e-6

    def test_softmax_kl_composite(self):
        rng = np.random.default_rng(1)
        logits = Tensor(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
        target = np.full((4, 3), 1.0 / 3.0)

        def fn():
            q = ad.softmax(logits, axis=-1)
            return ad.neg(ad.sum_(ad.scale(ad.log(q), target)))

        assert finite_diff_check(fn, [logits], eps=1e-5) < 1e-4

    def test_nondeterministic_fn_rejected(self):
        state = {"calls": 0}
        x = Tensor(1.0, requires_grad=True)

        def fn():
            state["calls"] += 1
            return ad.scale(x, float(state["calls"]))

        with pytest.raises(GradCheckError):
            finite_diff_check(fn, [x])


class TestNoGrad:
    def test_no_graph_inside_context(self):
        x = Tensor(np.ones(2), requires_grad=True)
        with ad.no_grad():
            y = ad.mul(x, x)
        assert not y.requires_grad

    def test_reenabled_after(self):
        x = Tensor(np.ones(2), requires_grad=True)
        with ad.no_grad():
            pass
        assert ad.mul(x, x).requires_grad
