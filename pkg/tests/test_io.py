from __future__ import annotations

import numpy as np
import pytest

from app.core.errors import ConfigError, FormatError, ShapeError, UnsupportedFormatError
from app.repositories.artifact_repo import ArtifactRepository, sha256_file
from app.repositories.image_io import read_pfm, read_ppm, write_pfm, write_ppm


class TestPFM:
    def test_round_trip_is_exact_in_f32(self, tmp_path, rng):
        values = rng.normal(size=(5, 7)).astype(np.float32)
        write_pfm(tmp_path / "d.pfm", values)
        np.testing.assert_array_equal(read_pfm(tmp_path / "d.pfm"), values)

    def test_rows_stored_bottom_up(self, tmp_path):
        values = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        write_pfm(tmp_path / "d.pfm", values)
        raw = (tmp_path / "d.pfm").read_bytes()
        first_row = np.frombuffer(raw[-16:-8], dtype="<f4")
        assert first_row.tolist() == [3.0, 4.0]

    def test_big_endian_file(self, tmp_path):
        values = np.array([[1.5, -2.0], [0.25, 8.0]], dtype=np.float32)
        body = np.flipud(values).astype(">f4").tobytes()
        (tmp_path / "be.pfm").write_bytes(b"Pf\n2 2\n1.0\n" + body)
        np.testing.assert_array_equal(read_pfm(tmp_path / "be.pfm"), values)

    def test_color_pfm_unsupported(self, tmp_path):
        (tmp_path / "c.pfm").write_bytes(b"PF\n1 1\n-1.0\n" + bytes(12))
        with pytest.raises(UnsupportedFormatError):
            read_pfm(tmp_path / "c.pfm")

    def test_truncated_payload_reports_offset(self, tmp_path):
        header = b"Pf\n2 2\n-1.0\n"
        (tmp_path / "t.pfm").write_bytes(header + bytes(10))
        with pytest.raises(FormatError) as exc:
            read_pfm(tmp_path / "t.pfm")
        assert exc.value.offset == len(header) + 10

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.pfm").write_bytes(b"P7\n1 1\n-1.0\n" + bytes(4))
        with pytest.raises(FormatError):
            read_pfm(tmp_path / "x.pfm")

    def test_zero_scale(self, tmp_path):
        (tmp_path / "z.pfm").write_bytes(b"Pf\n1 1\n0\n" + bytes(4))
        with pytest.raises(FormatError):
            read_pfm(tmp_path / "z.pfm")

    def test_write_requires_2d(self, tmp_path):
        with pytest.raises(ShapeError):
            write_pfm(tmp_path / "d.pfm", np.zeros((2, 2, 1)))


class TestPPM:
    def test_half_intensity_quantizes_to_128(self, tmp_path):
        write_ppm(tmp_path / "g.ppm", np.full((1, 1, 3), 0.5))
        assert (tmp_path / "g.ppm").read_bytes()[-3:] == bytes([128, 128, 128])
        np.testing.assert_allclose(read_ppm(tmp_path / "g.ppm"), 128 / 255)

    def test_round_trip_within_quantization(self, tmp_path, rng):
        image = rng.uniform(size=(4, 6, 3))
        write_ppm(tmp_path / "i.ppm", image)
        assert np.max(np.abs(read_ppm(tmp_path / "i.ppm") - image)) <= 0.5 / 255 + 1e-12

    def test_header_comments_are_skipped(self, tmp_path):
        (tmp_path / "c.ppm").write_bytes(b"P6\n# comentario\n1 1\n255\n" + bytes([255, 0, 51]))
        np.testing.assert_allclose(read_ppm(tmp_path / "c.ppm")[0, 0], [1.0, 0.0, 0.2])

    def test_maxval_unsupported(self, tmp_path):
        (tmp_path / "m.ppm").write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
        with pytest.raises(UnsupportedFormatError):
            read_ppm(tmp_path / "m.ppm")

    def test_payload_size_mismatch(self, tmp_path):
        (tmp_path / "p.ppm").write_bytes(b"P6\n2 1\n255\n" + bytes(5))
        with pytest.raises(FormatError):
            read_ppm(tmp_path / "p.ppm")

    def test_ascii_variant_rejected(self, tmp_path):
        (tmp_path / "a.ppm").write_bytes(b"P3\n1 1\n255\n0 0 0\n")
        with pytest.raises(FormatError):
            read_ppm(tmp_path / "a.ppm")


class TestArtifacts:
    def test_csv_formats_floats_and_bools(self, tmp_path):
        repo = ArtifactRepository(tmp_path)
        path = repo.write_csv("t.csv", ("a", "b", "c"), [{"a": 0.5, "b": True, "c": "x"}])
        assert path.read_text(encoding="utf-8") == "a,b,c\n0.500000,true,x\n"

    def test_manifest_round_trip(self, tmp_path):
        repo = ArtifactRepository(tmp_path / "out")
        out = repo.write_text("result.txt", "ok\n")
        source = tmp_path / "input.bin"
        source.write_bytes(b"abc")
        manifest = repo.write_manifest(
            command="evaluate",
            config_text="seed=1\n",
            config_hash="h",
            seed=1,
            inputs=[source],
            outputs=[out],
        )
        assert manifest.outputs == {"result.txt": sha256_file(out)}
        loaded = ArtifactRepository.read_manifest(tmp_path / "out")
        assert loaded.inputs == {str(source): sha256_file(source)}
        assert loaded.command == "evaluate"

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ConfigError):
            ArtifactRepository.read_manifest(tmp_path)
