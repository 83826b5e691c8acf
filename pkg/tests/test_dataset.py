from __future__ import annotations

import numpy as np
import pytest

from app.core.errors import ConfigError
from app.schemas.scene import CameraRig
from app.services.dataset_service import (
    DatasetService,
    generate_scene,
    generate_synthetic_dataset,
)


def _generate(seed=3, n=3, workers=None):
    return generate_synthetic_dataset(
        seed, n, (16, 32), (2, 6), CameraRig(), layers=(2, 3), workers=workers
    )


class TestSyntheticData:
    def test_deterministic_for_seed(self):
        a, b = _generate(), _generate(workers=1)
        for sa, sb in zip(a, b):
            np.testing.assert_array_equal(sa.clean_left, sb.clean_left)
            np.testing.assert_array_equal(sa.fog_right, sb.fog_right)
            np.testing.assert_array_equal(sa.disp_left, sb.disp_left)
            assert sa.fog == sb.fog

    def test_different_seed_differs(self):
        assert not np.array_equal(_generate(seed=3)[0].clean_left, _generate(seed=4)[0].clean_left)

    def test_prefix_is_stable(self):
        short, long_ = _generate(n=2), _generate(n=4)
        np.testing.assert_array_equal(short[1].clean_left, long_[1].clean_left)

    def test_right_view_warps_to_left(self):
        for scene in _generate(n=4):
            h, w = scene.shape
            visible = ~scene.occluded_left
            ys, xs = np.nonzero(visible)
            d = scene.disp_left[ys, xs].astype(int)
            np.testing.assert_array_equal(scene.clean_right[ys, xs - d], scene.clean_left[ys, xs])
            assert visible.mean() > 0.3

    def test_disparity_in_range(self):
        for scene in _generate(n=4):
            assert scene.disp_left.min() >= 2 and scene.disp_left.max() <= 6
            assert scene.valid_left.all()
            assert set(np.unique(scene.disp_left)) <= {2.0, 3.0, 4.0, 5.0, 6.0}

    def test_fog_rendered_and_brighter_towards_airlight(self):
        for scene in _generate(n=2):
            assert scene.fog_left is not None and scene.fog_left.shape == scene.clean_left.shape
            airlight = np.asarray(scene.fog.airlight)
            moved = np.abs(scene.fog_left - airlight) <= np.abs(scene.clean_left - airlight) + 1e-12
            assert moved.all()

    def test_occlusion_band_matches_disparity_jump(self):
        checked = 0
        for seed in range(40):
            scene = generate_scene(
                np.random.default_rng(seed), "s", 16, 64, (1, 6), CameraRig(), layers=(2, 2)
            )
            (d0, _), (d1, (y0, y1, x0, _)) = scene.meta["layers"]
            jump = d1 - d0
            if x0 - jump < d0:
                continue
            for y in range(16):
                cols = np.nonzero(scene.occluded_left[y, d0:])[0] + d0
                expected = range(x0 - jump, x0) if y0 <= y < y1 else range(0)
                assert cols.tolist() == list(expected)
            checked += 1
        assert checked > 0

    @pytest.mark.parametrize(
        "disp_range, layers", [((5, 2), (2, 3)), ((2, 8), (2, 3)), ((2, 6), (0, 2))]
    )
    def test_invalid_arguments(self, disp_range, layers):
        with pytest.raises(ConfigError):
            generate_synthetic_dataset(0, 1, (16, 32), disp_range, CameraRig(), layers=layers)


class TestDatasetService:
    def test_split_keeps_both_sides(self, tiny_scenes):
        train, evals = DatasetService.split(tiny_scenes, 0.5)
        assert len(train) == 2 and len(evals) == 2
        assert [s.name for s in train + evals] == [s.name for s in tiny_scenes]

    def test_split_needs_two_scenes(self, tiny_scenes):
        with pytest.raises(ConfigError):
            DatasetService.split(tiny_scenes[:1], 0.5)

    def test_disk_round_trip(self, tmp_path, tiny_scenes, tiny_config):
        service = DatasetService()
        records = service.write(tiny_scenes, tmp_path / "data")
        assert len(records) == len(tiny_scenes)
        config = tiny_config.with_overrides(
            ["data.source=directory", f"data.directory={tmp_path / 'data'}"]
        )
        loaded = service.load(config)
        for original, scene in zip(tiny_scenes, loaded):
            assert scene.name == original.name
            np.testing.assert_array_equal(scene.disp_left, original.disp_left)
            assert np.max(np.abs(scene.clean_left - original.clean_left)) <= 0.5 / 255 + 1e-12
            np.testing.assert_array_equal(scene.occluded_left, original.occluded_left)

    def test_files_lists_every_artifact(self, tmp_path, tiny_scenes):
        service = DatasetService()
        service.write(tiny_scenes[:1], tmp_path)
        files = service.repo.files(tmp_path)
        assert files[0].name == "index.json"
        assert len(files) == 1 + 7
        assert all(p.is_file() for p in files)
