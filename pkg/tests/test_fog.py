from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.errors import ConfigError, NumericError, ShapeError
from app.schemas.scene import CameraRig, DepthMap, FogParams
from app.services.fog_service import (
    dehaze_oracle,
    depth_to_disparity,
    disparity_to_depth,
    render_fog,
    render_pair,
    transmission,
)


@pytest.fixture
def clean(rng):
    return rng.uniform(0.0, 1.0, size=(6, 8, 3))


@pytest.fixture
def depth(rng):
    return DepthMap.dense(rng.uniform(0.5, 3.0, size=(6, 8)))


class TestTransmission:
    def test_matches_exponential(self, depth):
        t = transmission(depth, 0.7)
        np.testing.assert_allclose(t, np.exp(-0.7 * depth.values), rtol=0, atol=1e-12)

    def test_in_unit_interval(self, depth):
        t = transmission(depth, 2.0)
        assert np.all(t > 0) and np.all(t <= 1)

    def test_negative_beta_raises(self, depth):
        with pytest.raises(ConfigError):
            transmission(depth, -0.1)

    def test_invalid_pixels_use_far_depth(self):
        values = np.array([[1.0, 2.0], [4.0, 1.0]])
        mask = np.array([[True, True], [False, True]])
        t = transmission(DepthMap(values=values, valid_mask=mask), 1.0)
        assert t[1, 0] == pytest.approx(np.exp(-2.0))
        t = transmission(DepthMap(values=values, valid_mask=mask), 1.0, fallback_depth=10.0)
        assert t[1, 0] == pytest.approx(np.exp(-10.0))


class TestRenderFog:
    def test_zero_beta_is_identity(self, clean, depth):
        out = render_fog(clean, depth, FogParams(beta=0.0, airlight=0.9))
        np.testing.assert_array_equal(out, clean)

    def test_round_trip_through_dehaze(self, clean, depth):
        fog = FogParams(beta=0.8, airlight=(0.9, 0.85, 0.8))
        foggy = render_fog(clean, depth, fog)
        recovered, reliable = dehaze_oracle(foggy, depth, fog)
        assert reliable.all()
        np.testing.assert_allclose(recovered, clean, atol=1e-6)

    def test_dense_fog_approaches_airlight(self, clean):
        depth = DepthMap.dense(np.full((6, 8), 50.0))
        fog = FogParams(beta=1.0, airlight=0.7)
        foggy = render_fog(clean, depth, fog)
        assert np.max(np.abs(foggy - 0.7)) <= np.exp(-50.0)

    def test_farther_pixels_are_closer_to_airlight(self):
        clean = np.zeros((1, 2, 3))
        depth = DepthMap.dense(np.array([[1.0, 3.0]]))
        foggy = render_fog(clean, depth, FogParams(beta=0.5, airlight=1.0))
        assert foggy[0, 1, 0] > foggy[0, 0, 0]

    def test_output_stays_in_unit_range(self, clean, depth):
        foggy = render_fog(clean, depth, FogParams(beta=1.5, airlight=1.0))
        assert foggy.min() >= 0.0 and foggy.max() <= 1.0

    def test_shape_mismatch_raises(self, clean):
        with pytest.raises(ShapeError):
            render_fog(clean, DepthMap.dense(np.ones((5, 8))), FogParams(beta=0.1))

    def test_dehaze_marks_unreliable_pixels(self, clean):
        depth = DepthMap.dense(np.full((6, 8), 30.0))
        fog = FogParams(beta=1.0, airlight=0.5)
        recovered, reliable = dehaze_oracle(render_fog(clean, depth, fog), depth, fog)
        assert not reliable.any()
        np.testing.assert_allclose(recovered, 0.5)


class TestDisparityDepth:
    def test_round_trip(self):
        rig = CameraRig(focal_px=100.0, baseline_m=0.2)
        disp = np.array([[2.0, 4.0], [5.0, 0.05]])
        depth = disparity_to_depth(disp, rig)
        assert depth.values[0, 0] == pytest.approx(10.0)
        assert not depth.valid_mask[1, 1]
        back = depth_to_disparity(depth, rig)
        np.testing.assert_allclose(back[depth.valid_mask], disp[depth.valid_mask])
        assert back[1, 1] == 0.0

    def test_non_finite_disparity_is_invalid(self):
        depth = disparity_to_depth(np.array([[np.nan, 3.0]]), CameraRig())
        assert depth.valid_mask.tolist() == [[False, True]]

    def test_render_pair_uses_each_view_depth(self, rng):
        rig = CameraRig(focal_px=10.0, baseline_m=0.5)
        left = rng.uniform(size=(4, 4, 3))
        near = np.full((4, 4), 5.0)
        far = np.full((4, 4), 1.0)
        fog = FogParams(beta=1.0, airlight=1.0)
        fog_l, fog_r = render_pair(left, left.copy(), near, far, rig, fog)
        # disparidade menor = mais longe = mais névoa
        assert np.all(fog_r >= fog_l)


class TestSchemas:
    def test_gray_airlight_expands(self):
        assert FogParams(beta=0.1, airlight=0.6).airlight == (0.6, 0.6, 0.6)

    def test_airlight_out_of_range(self):
        with pytest.raises(ValidationError):
            FogParams(beta=0.1, airlight=1.2)

    def test_negative_beta_rejected(self):
        with pytest.raises(ValidationError):
            FogParams(beta=-1.0)

    def test_depth_map_rejects_non_positive(self):
        with pytest.raises(NumericError):
            DepthMap.dense(np.array([[1.0, 0.0]]))
