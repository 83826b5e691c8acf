from __future__ import annotations

import numpy as np
import pytest

from app.core.errors import GradientError, NumericError, ShapeError
from app.tensor import Tensor, active_tape, backward, no_grad, numeric_mode, tape_scope
from app.tensor import ops


def _param(values) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)


class TestTape:
    def test_broadcast_gradient_sums_expanded_axes(self, rng):
        a = _param(rng.normal(size=(2, 3)))
        b = _param(rng.normal(size=(3,)))
        with tape_scope():
            backward((a * b).sum())
        np.testing.assert_allclose(b.grad, a.data.sum(axis=0))
        np.testing.assert_allclose(a.grad, np.broadcast_to(b.data, (2, 3)))

    def test_shared_input_accumulates(self):
        x = _param([1.0, 2.0, 3.0])
        with tape_scope():
            backward((x * x + x).sum())
        np.testing.assert_allclose(x.grad, 2 * x.data + 1)

    def test_second_backward_raises(self):
        x = _param([1.0, 2.0])
        with tape_scope():
            loss = x.square().sum()
            backward(loss)
            with pytest.raises(GradientError):
                backward(loss)

    def test_reset_allows_new_backward(self):
        x = _param([1.0, 2.0])
        with tape_scope() as tape:
            loss = x.square().sum()
            backward(loss)
            tape.reset()
            x.zero_grad()
            backward(x.square().sum())
        np.testing.assert_allclose(x.grad, [2.0, 4.0])

    def test_non_scalar_loss_raises(self):
        x = _param([1.0, 2.0])
        with tape_scope(), pytest.raises(GradientError):
            backward(x * 2.0)

    def test_loss_without_parameters_raises(self):
        x = Tensor([1.0, 2.0])
        with pytest.raises(GradientError):
            backward(x.sum())

    def test_no_grad_records_nothing(self):
        x = _param([1.0, 2.0])
        with tape_scope() as tape, no_grad():
            y = (x * 3.0).sum()
        assert len(tape) == 0
        assert not y.requires_grad

    def test_detach_stops_gradient(self):
        x = _param([1.0, 2.0])
        with tape_scope():
            backward((x.detach() * x).sum())
        np.testing.assert_allclose(x.grad, x.data)

    def test_item_requires_single_element(self):
        with pytest.raises(ShapeError):
            Tensor([1.0, 2.0]).item()

    def test_full_reduction_is_zero_dimensional(self):
        x = _param(np.ones((2, 3)))
        assert Tensor(3.0).shape == ()
        assert x.sum().shape == ()
        assert x.mean().shape == ()

    def test_backward_of_sum_fills_ones(self):
        x = _param(np.arange(6.0).reshape(2, 3))
        with tape_scope():
            loss = x.sum()
            backward(loss)
        assert loss.shape == ()
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_backward_of_mean_on_default_tape(self):
        x = _param(np.ones((4, 4)))
        backward(x.mean())
        np.testing.assert_allclose(x.grad, np.full((4, 4), 1 / 16))
        assert len(active_tape()) == 0

    def test_graph_spanning_two_tapes_raises(self):
        x = _param([1.0, 2.0])
        with tape_scope():
            y = x * 2.0
        with tape_scope(), pytest.raises(GradientError):
            backward((y * y).sum())

    def test_loss_from_before_reset_raises(self):
        x = _param([1.0, 2.0])
        with tape_scope() as tape:
            stale = x.square().sum()
            tape.reset()
            with pytest.raises(GradientError):
                backward(stale)


class TestNumericModes:
    def test_oracle_is_float64_and_strict(self):
        t = Tensor([1.0])
        assert t.dtype == np.float64
        with pytest.raises(NumericError):
            ops.log(Tensor([0.0, 1.0]))
        with pytest.raises(NumericError):
            ops.div(Tensor([1.0]), Tensor([0.0]))

    def test_training_is_float32_and_clamped(self):
        with numeric_mode("training"):
            t = Tensor([0.0, 1.0])
            assert t.dtype == np.float32
            out = ops.log(t)
            assert np.all(np.isfinite(out.data))
            assert np.all(np.isfinite(ops.div(Tensor([1.0]), Tensor([0.0])).data))
            assert np.all(np.isfinite(ops.sqrt(Tensor([-1.0, 4.0])).data))

    def test_mode_is_restored(self):
        with numeric_mode("training"):
            pass
        assert Tensor([1.0]).dtype == np.float64


class TestConv2d:
    def test_matches_brute_force(self, rng):
        x = Tensor(rng.normal(size=(5, 6, 2)))
        w = Tensor(rng.normal(size=(3, 3, 2, 4)))
        b = Tensor(rng.normal(size=(4,)))
        out = ops.conv2d(x, w, b, stride=1, padding=1).data

        xp = np.pad(x.data, ((1, 1), (1, 1), (0, 0)))
        expected = np.zeros((5, 6, 4))
        for y in range(5):
            for xx in range(6):
                patch = xp[y : y + 3, xx : xx + 3, :]
                expected[y, xx] = np.tensordot(patch, w.data, axes=([0, 1, 2], [0, 1, 2])) + b.data
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_stride_two_output_size(self, rng):
        x = Tensor(rng.normal(size=(7, 9, 1)))
        w = Tensor(rng.normal(size=(3, 3, 1, 1)))
        assert ops.conv2d(x, w, stride=2, padding=1).shape == (4, 5, 1)

    def test_non_integer_output_raises(self, rng):
        x = Tensor(rng.normal(size=(4, 4, 1)))
        w = Tensor(rng.normal(size=(3, 3, 1, 1)))
        with pytest.raises(ShapeError):
            ops.conv2d(x, w, stride=2, padding=1)

    def test_channel_mismatch_raises(self, rng):
        x = Tensor(rng.normal(size=(4, 4, 2)))
        w = Tensor(rng.normal(size=(3, 3, 3, 1)))
        with pytest.raises(ShapeError):
            ops.conv2d(x, w, padding=1)


class TestPoolingAndResampling:
    def test_avg_pool_block_mean(self):
        x = Tensor(np.arange(16, dtype=np.float64).reshape(4, 4, 1))
        out = ops.avg_pool2d(x, 2).data[..., 0]
        np.testing.assert_allclose(out, [[2.5, 4.5], [10.5, 12.5]])

    def test_avg_pool_indivisible_raises(self):
        with pytest.raises(ShapeError):
            ops.avg_pool2d(Tensor(np.zeros((5, 4, 1))), 2)

    def test_upsample_preserves_constants(self):
        x = Tensor(np.full((3, 4, 2), 1.5))
        out = ops.upsample_bilinear(x, 4)
        assert out.shape == (12, 16, 2)
        np.testing.assert_allclose(out.data, 1.5)

    def test_global_avg_pool(self, rng):
        x = Tensor(rng.normal(size=(3, 5, 2)))
        np.testing.assert_allclose(ops.global_avg_pool(x).data[0, 0], x.data.mean(axis=(0, 1)))

    def test_concat_splits_gradient(self, rng):
        a, b = _param(rng.normal(size=(2, 2, 1))), _param(rng.normal(size=(2, 2, 3)))
        weights = rng.normal(size=(2, 2, 4))
        with tape_scope():
            backward((ops.concat([a, b], axis=-1) * weights).sum())
        np.testing.assert_allclose(a.grad, weights[..., :1])
        np.testing.assert_allclose(b.grad, weights[..., 1:])

    def test_elementwise_dispatch_unknown_op(self):
        with pytest.raises(ShapeError):
            ops.elementwise("cube", Tensor([1.0]))  # type: ignore[arg-type]
