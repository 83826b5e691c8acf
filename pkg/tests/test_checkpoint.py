from __future__ import annotations

import struct

import numpy as np
import pytest

from app.core.errors import ConfigError, FormatError, ShapeError, UnsupportedFormatError
from app.networks import build_model
from app.repositories.checkpoint_repo import (
    MAGIC,
    CheckpointRepository,
    decode_checkpoint,
    encode_checkpoint,
)
from app.schemas.experiment import ModelConfig

CONFIG = ModelConfig(channels=4, downsample=4, iters=2, max_disp=3, radius=1)


class TestCheckpointFormat:
    def test_model_state_round_trip(self, tmp_path):
        model = build_model("student", CONFIG, 3)
        repo = CheckpointRepository(tmp_path)
        path = repo.save("student.cfdw", model.state_dict())
        assert path.read_bytes().startswith(MAGIC)

        other = build_model("student", CONFIG, 4)
        other.load_state_dict(repo.load("student.cfdw"))
        for name, value in model.state_dict().items():
            np.testing.assert_array_equal(other.state_dict()[name], value.astype(np.float32))

    def test_preserves_names_and_shapes(self):
        state = {"a.weight": np.ones((2, 3)), "b": np.zeros(4), "escalar": np.array(1.5)}
        decoded = decode_checkpoint(encode_checkpoint(state))
        assert list(decoded) == ["a.weight", "b", "escalar"]
        assert decoded["a.weight"].shape == (2, 3)
        assert decoded["escalar"].shape == ()
        assert decoded["escalar"].item() == 1.5

    def test_bad_magic(self):
        with pytest.raises(FormatError) as exc:
            decode_checkpoint(b"XXXX" + bytes(8))
        assert exc.value.offset == 0

    def test_unknown_version(self):
        with pytest.raises(UnsupportedFormatError):
            decode_checkpoint(MAGIC + struct.pack("<II", 99, 0))

    def test_truncated(self):
        blob = encode_checkpoint({"w": np.ones((3, 3))})
        with pytest.raises(FormatError):
            decode_checkpoint(blob[:-5])

    def test_trailing_bytes(self):
        blob = encode_checkpoint({"w": np.ones(2)})
        with pytest.raises(FormatError):
            decode_checkpoint(blob + b"\x00")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            CheckpointRepository(tmp_path).load("nada.cfdw")


class TestLoadStateDict:
    def test_missing_keys_rejected(self):
        model = build_model("student", CONFIG, 0)
        state = model.state_dict()
        state.pop(next(iter(state)))
        with pytest.raises(ConfigError):
            model.load_state_dict(state)

    def test_shape_mismatch_rejected(self):
        model = build_model("student", CONFIG, 0)
        state = model.state_dict()
        name = next(iter(state))
        state[name] = np.zeros((1,))
        with pytest.raises(ShapeError):
            model.load_state_dict(state)
