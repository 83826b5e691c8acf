from __future__ import annotations

import numpy as np
import pytest

from app.core.errors import ShapeError
from app.networks import (
    FeatureExtractor,
    StereoMatcher,
    build_correlation,
    build_model,
    window_lookup,
)
from app.schemas.experiment import ModelConfig
from app.tensor import Tensor


def _unit_features(rng, shape):
    f = rng.normal(size=shape)
    return f / np.linalg.norm(f, axis=-1, keepdims=True)


class TestCorrelation:
    def test_matches_brute_force(self, rng):
        left = Tensor(rng.normal(size=(3, 7, 4)))
        right = Tensor(rng.normal(size=(3, 7, 4)))
        vol = build_correlation(left, right, 3).data
        expected = np.zeros((3, 7, 4))
        for y in range(3):
            for x in range(7):
                for d in range(4):
                    if x - d >= 0:
                        expected[y, x, d] = left.data[y, x] @ right.data[y, x - d] / 2.0
        np.testing.assert_allclose(vol, expected, atol=1e-12)

    def test_peak_at_true_shift(self, rng):
        shift = 3
        right = _unit_features(rng, (4, 12, 8))
        left = np.zeros_like(right)
        left[:, shift:] = right[:, :-shift]
        vol = build_correlation(Tensor(left), Tensor(right), 5).data
        assert np.all(vol[:, 5:].argmax(axis=-1) == shift)

    def test_max_disp_must_fit(self, rng):
        f = Tensor(rng.normal(size=(2, 4, 2)))
        with pytest.raises(ShapeError):
            build_correlation(f, f, 4)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            build_correlation(Tensor(np.zeros((2, 4, 2))), Tensor(np.zeros((2, 5, 2))), 1)


class TestWindowLookup:
    def test_integer_positions_pick_levels(self, rng):
        vol = Tensor(rng.normal(size=(2, 3, 5)))
        disp = Tensor(np.full((2, 3, 1), 2.0))
        out = window_lookup(vol, disp, 1).data
        np.testing.assert_allclose(out, vol.data[:, :, 1:4])

    def test_fractional_position_interpolates(self):
        vol = Tensor(np.arange(4, dtype=np.float64).reshape(1, 1, 4))
        out = window_lookup(vol, Tensor(np.array([[[1.25]]])), 0).data
        assert out[0, 0, 0] == pytest.approx(1.25)

    def test_out_of_range_is_zero(self):
        vol = Tensor(np.ones((1, 1, 3)))
        out = window_lookup(vol, Tensor(np.zeros((1, 1, 1))), 1).data
        assert out[0, 0].tolist() == [0.0, 1.0, 1.0]

    def test_disp_shape_checked(self, rng):
        with pytest.raises(ShapeError):
            window_lookup(Tensor(np.zeros((2, 3, 4))), Tensor(np.zeros((2, 3))), 1)


class TestExtractor:
    def test_output_resolution(self, rng):
        extractor = FeatureExtractor(rng, channels=5, downsample=4)
        assert extractor(np.zeros((8, 16, 3))).shape == (2, 4, 5)

    def test_indivisible_input(self, rng):
        extractor = FeatureExtractor(rng, channels=2, downsample=4)
        with pytest.raises(ShapeError):
            extractor(np.zeros((6, 16, 3)))

    def test_invalid_factor(self, rng):
        with pytest.raises(ShapeError):
            FeatureExtractor(rng, downsample=3)


class TestStereoMatcher:
    def test_sequence_length_and_resolution(self, rng):
        matcher = StereoMatcher(rng, channels=4, downsample=4, max_disp=3, radius=1, iters=3)
        left, right = rng.uniform(size=(2, 8, 16, 3))
        seq = matcher.predict(left, right)
        assert len(seq) == 3
        assert all(p.shape == (8, 16) for p in seq.preds)
        assert seq.final is seq.preds[-1]

    def test_iteration_override(self, rng):
        matcher = StereoMatcher(rng, channels=4, downsample=4, max_disp=3, radius=1, iters=3)
        image = rng.uniform(size=(8, 16, 3))
        assert len(matcher.predict(image, image, iters=1)) == 1
        with pytest.raises(ShapeError):
            matcher.predict(image, image, iters=0)

    def test_pair_size_mismatch(self, rng):
        matcher = StereoMatcher(rng, channels=4, downsample=4, max_disp=3, radius=1, iters=1)
        with pytest.raises(ShapeError):
            matcher.predict(np.zeros((8, 16, 3)), np.zeros((8, 12, 3)))


class TestModels:
    config = ModelConfig(channels=4, downsample=4, iters=2, max_disp=3, radius=1)

    def test_same_seed_same_weights(self):
        a = build_model("student", self.config, 11).state_dict()
        b = build_model("student", self.config, 11).state_dict()
        assert a.keys() == b.keys()
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_teacher_and_student_share_layout(self):
        teacher = build_model("teacher", self.config, 0)
        student = build_model("student", self.config, 1)
        student.copy_from(teacher)
        np.testing.assert_array_equal(
            student.state_dict()["converter.pa_conv.weight"],
            teacher.state_dict()["converter.pa_conv.weight"],
        )

    def test_teacher_requires_matching_sizes(self, rng):
        teacher = build_model("teacher", self.config, 0)
        a, b = np.zeros((8, 16, 3)), np.zeros((8, 12, 3))
        with pytest.raises(ShapeError):
            teacher((a, a), (b, b))

    def test_student_outputs_features(self, rng):
        student = build_model("student", self.config, 0)
        image = rng.uniform(size=(8, 16, 3))
        out = student((image, image))
        assert out.raw_left.shape == (2, 4, 4)
        assert out.converted_right.shape == (2, 4, 4)
        assert len(out.seq) == 2

    def test_freeze_stops_recording(self, rng):
        teacher = build_model("teacher", self.config, 0)
        teacher.freeze()
        assert all(not p.requires_grad for p in teacher.parameters())

    def test_teacher_fusion_of_same_image_doubles_conversion(self, rng):
        teacher = build_model("teacher", self.config, 0)
        image = rng.uniform(size=(8, 16, 3))
        _, converted = teacher.features(image)
        np.testing.assert_array_equal(teacher.fuse(image, image).data, 2.0 * converted.data)

    def test_zero_update_head_keeps_initial_disparity(self, rng):
        student = build_model("student", self.config, 0)
        head = student.matcher.update.disp_head
        head.weight.data[...] = 0.0
        head.bias.data[...] = 0.0
        left, right = rng.uniform(size=(8, 16, 3)), rng.uniform(size=(8, 16, 3))
        out = student((left, right), iters=3)
        assert len(out.seq) == 3
        for pred in out.seq.preds:
            np.testing.assert_array_equal(pred.data, np.zeros((8, 16)))
