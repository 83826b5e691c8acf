from __future__ import annotations

import numpy as np
import pytest

from app.core.errors import NumericError, ShapeError
from app.networks import build_model
from app.schemas.experiment import LossConfig
from app.services.losses import (
    LossBreakdown,
    channel_norm_distance,
    disparity_seq_loss,
    distillation_loss,
    masked_l1,
    student_total_loss,
    teacher_loss,
    triplet_contrastive_loss,
)
from app.tensor import Tensor, backward, tape_scope


@pytest.fixture
def feats(rng):
    return Tensor(rng.normal(size=(3, 4, 5)))


class TestDisparityLoss:
    def test_two_step_sequence(self):
        gt = np.zeros((2, 3))
        preds = [Tensor(np.full((2, 3), 1.0)), Tensor(np.full((2, 3), -0.5))]
        loss = disparity_seq_loss(preds, gt, gamma=0.95)
        assert loss.item() == pytest.approx(1.45, abs=1e-12)

    def test_single_prediction_is_plain_error(self):
        gt = np.ones((2, 2))
        loss = disparity_seq_loss([Tensor(np.full((2, 2), 1.3))], gt, gamma=0.5)
        assert loss.item() == pytest.approx(0.3)

    def test_mask_excludes_pixels(self):
        pred = Tensor(np.array([[1.0, 100.0]]))
        gt = np.zeros((1, 2))
        mask = np.array([[True, False]])
        assert masked_l1(pred, gt, mask).item() == pytest.approx(1.0)

    def test_empty_mask_raises(self):
        with pytest.raises(NumericError):
            masked_l1(Tensor(np.zeros((1, 2))), np.zeros((1, 2)), np.zeros((1, 2), dtype=bool))

    def test_empty_sequence_raises(self):
        with pytest.raises(ShapeError):
            disparity_seq_loss([], np.zeros((1, 1)), 0.9)


class TestChannelNormDistance:
    def test_identical_is_zero(self, feats):
        assert channel_norm_distance(feats, feats).item() == pytest.approx(0.0, abs=1e-15)

    def test_opposite_is_four(self, feats):
        assert channel_norm_distance(feats, feats * -1.0).item() == pytest.approx(4.0)

    def test_bounded(self, rng):
        for _ in range(5):
            a = Tensor(rng.normal(size=(3, 3, 4)))
            b = Tensor(rng.normal(size=(3, 3, 4)))
            d = channel_norm_distance(a, b).item()
            assert 0.0 <= d <= 4.0

    def test_positive_channel_scaling_invariance(self, rng, feats):
        scale = rng.uniform(0.1, 10.0, size=(1, 1, 5))
        other = Tensor(rng.normal(size=(3, 4, 5)))
        base = channel_norm_distance(feats, other).item()
        scaled = channel_norm_distance(feats * scale, other).item()
        assert scaled == pytest.approx(base, abs=1e-12)

    def test_zero_channel_stays_finite(self, feats):
        zeros = Tensor(np.zeros(feats.shape))
        d = channel_norm_distance(feats, zeros).item()
        # canal nulo normalizado continua nulo: cada canal contribui 1
        assert d == pytest.approx(1.0)

    def test_shape_mismatch(self, feats):
        with pytest.raises(ShapeError):
            channel_norm_distance(feats, Tensor(np.zeros((3, 4, 4))))


class TestTripletLoss:
    def test_equals_margin_when_everything_coincides(self, feats):
        loss = triplet_contrastive_loss(feats, feats, feats, margin=1.0)
        assert loss.item() == pytest.approx(1.0, abs=1e-12)

    def test_zero_when_negative_is_far(self, feats):
        loss = triplet_contrastive_loss(feats, feats, feats * -1.0, margin=1.0)
        assert loss.item() == 0.0

    def test_margin_must_be_positive(self, feats):
        with pytest.raises(NumericError):
            triplet_contrastive_loss(feats, feats, feats, margin=0.0)


class TestDistillationLoss:
    def test_teacher_receives_no_gradient(self, rng):
        teacher = Tensor(rng.normal(size=(2, 2, 3)), requires_grad=True)
        clean = Tensor(rng.normal(size=(2, 2, 3)), requires_grad=True)
        fog = Tensor(rng.normal(size=(2, 2, 3)), requires_grad=True)
        with tape_scope():
            backward(distillation_loss(teacher, clean, fog))
        assert teacher.grad is None
        assert clean.grad is not None and fog.grad is not None

    def test_value(self):
        t = Tensor(np.ones((1, 2, 1)))
        s_clean = Tensor(np.zeros((1, 2, 1)))
        s_fog = Tensor(np.full((1, 2, 1), 3.0))
        assert distillation_loss(t, s_clean, s_fog).item() == pytest.approx(3.0)


class TestTotalLosses:
    def test_student_breakdown_sums(self, tiny_config, tiny_scenes):
        student = build_model("student", tiny_config.model, 0)
        teacher = build_model("teacher", tiny_config.model, 1)
        teacher.freeze()
        weights = LossConfig()
        total, parts = student_total_loss(tiny_scenes[0], student, teacher, weights)
        expected = parts.disp_clean + parts.disp_fog + parts.dist + parts.cont
        assert total.item() == pytest.approx(expected)
        assert parts.dist > 0 and parts.cont >= 0

    def test_single_domain_without_extras(self, tiny_config, tiny_scenes):
        student = build_model("student", tiny_config.model, 0)
        total, parts = student_total_loss(
            tiny_scenes[0],
            student,
            None,
            LossConfig(),
            domains=("clean",),
            use_dist=False,
            use_cont=False,
        )
        assert parts.disp_fog == 0.0 and parts.dist == 0.0
        assert total.item() == pytest.approx(parts.disp_clean)

    def test_dist_requires_both_domains(self, tiny_config, tiny_scenes):
        student = build_model("student", tiny_config.model, 0)
        with pytest.raises(ShapeError):
            student_total_loss(tiny_scenes[0], student, None, LossConfig(), domains=("fog",))

    def test_dist_requires_teacher(self, tiny_config, tiny_scenes):
        student = build_model("student", tiny_config.model, 0)
        with pytest.raises(ShapeError):
            student_total_loss(tiny_scenes[0], student, None, LossConfig(), use_cont=False)

    def test_teacher_loss(self, tiny_config, tiny_scenes):
        teacher = build_model("teacher", tiny_config.model, 1)
        total, parts = teacher_loss(tiny_scenes[0], teacher, LossConfig())
        assert total.item() == pytest.approx(parts.total)
        assert parts.epe >= 0

    def test_breakdown_arithmetic(self):
        a = LossBreakdown(disp_clean=1.0, total=1.0)
        b = LossBreakdown(disp_fog=2.0, total=2.0)
        mean = (a + b).scaled(0.5)
        assert mean.disp_clean == 0.5 and mean.disp_fog == 1.0 and mean.total == 1.5
