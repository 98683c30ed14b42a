import json
import struct

import numpy as np
import pytest

from voxcorr import (
    FeatureLevel,
    FeatureSet,
    KeypointSet,
    Volume3D,
    read_keypoints,
    read_mdf,
    read_raw_volume,
    write_keypoints,
    write_mdf,
    write_raw_volume,
    write_report,
)
from voxcorr.errors import (
    KeypointFormatError,
    MdfError,
    MdfHeaderError,
    MdfMagicError,
    MdfTruncatedError,
    VolumeFormatError,
)


def random_feature_set(rng, timestep=20, target_dims=(8, 8, 8)):
    levels = [
        FeatureLevel(0, rng.standard_normal((2, 2, 3, 4)).astype(np.float32)),
        FeatureLevel(2, rng.standard_normal((3, 4, 2, 2)).astype(np.float32)),
    ]
    return FeatureSet(levels=levels, timestep=timestep, target_dims=target_dims)


class TestMdfRoundTrip:
    def test_bitwise_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        fs = random_feature_set(rng)
        path = tmp_path / "feat.mdf"
        write_mdf(fs, path)
        back = read_mdf(path)
        assert back.timestep == fs.timestep
        assert back.target_dims == fs.target_dims
        assert [lv.level_id for lv in back.levels] == [0, 2]
        for a, b in zip(fs.levels, back.levels):
            assert a.data.shape == b.data.shape
            assert np.array_equal(
                a.data.view(np.uint32), b.data.view(np.uint32)
            )  # bit-for-bit

    def test_round_trip_without_target_dims(self, tmp_path):
        rng = np.random.default_rng(1)
        fs = FeatureSet(
            levels=[FeatureLevel(0, rng.standard_normal((1, 2, 2, 2)).astype(np.float32))],
            timestep=5,
        )
        path = tmp_path / "feat.mdf"
        write_mdf(fs, path)
        assert read_mdf(path).target_dims is None

    def test_write_then_rewrite_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(2)
        fs = random_feature_set(rng)
        p1, p2 = tmp_path / "a.mdf", tmp_path / "b.mdf"
        write_mdf(fs, p1)
        write_mdf(read_mdf(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestMdfMalformed:
    def make_valid(self, tmp_path):
        rng = np.random.default_rng(3)
        path = tmp_path / "ok.mdf"
        write_mdf(random_feature_set(rng), path)
        return path.read_bytes()

    def test_bad_magic(self, tmp_path):
        raw = self.make_valid(tmp_path)
        bad = tmp_path / "bad.mdf"
        bad.write_bytes(b"NOPE" + raw[4:])
        with pytest.raises(MdfMagicError, match="bad magic"):
            read_mdf(bad)

    def test_truncated_by_one_byte(self, tmp_path):
        raw = self.make_valid(tmp_path)
        bad = tmp_path / "trunc.mdf"
        bad.write_bytes(raw[:-1])
        with pytest.raises(MdfTruncatedError) as exc:
            read_mdf(bad)
        assert str(len(raw)) in str(exc.value)  # names expected size
        assert str(len(raw) - 1) in str(exc.value)  # and actual size

    def test_truncated_header(self, tmp_path):
        raw = self.make_valid(tmp_path)
        bad = tmp_path / "head.mdf"
        bad.write_bytes(raw[:10])
        with pytest.raises(MdfTruncatedError, match="truncated"):
            read_mdf(bad)

    def test_size_overflow_header(self, tmp_path):
        # Header advertises a payload vastly larger than the file: the reader
        # must fail from the size check, before allocating anything.
        raw = bytearray(self.make_valid(tmp_path))
        level_hdr = 4 + struct.calcsize("<HHHIII")
        struct.pack_into("<HIIII", raw, level_hdr, 0, 2**31, 2**31, 7, 11)
        bad = tmp_path / "huge.mdf"
        bad.write_bytes(bytes(raw))
        with pytest.raises(MdfTruncatedError, match="payload truncated"):
            read_mdf(bad)

    def test_non_increasing_level_ids(self, tmp_path):
        rng = np.random.default_rng(4)
        fs = random_feature_set(rng)
        path = tmp_path / "ids.mdf"
        write_mdf(fs, path)
        raw = bytearray(path.read_bytes())
        level_hdr = 4 + struct.calcsize("<HHHIII")
        struct.pack_into("<H", raw, level_hdr, 5)  # first id 5 > second id 2
        bad = tmp_path / "bad_ids.mdf"
        bad.write_bytes(bytes(raw))
        with pytest.raises(MdfHeaderError, match="strictly increasing"):
            read_mdf(bad)

    def test_trailing_bytes(self, tmp_path):
        raw = self.make_valid(tmp_path)
        bad = tmp_path / "trail.mdf"
        bad.write_bytes(raw + b"\x00" * 7)
        with pytest.raises(MdfHeaderError, match="trailing"):
            read_mdf(bad)

    def test_bad_version(self, tmp_path):
        raw = bytearray(self.make_valid(tmp_path))
        struct.pack_into("<H", raw, 4, 99)
        bad = tmp_path / "ver.mdf"
        bad.write_bytes(bytes(raw))
        with pytest.raises(MdfHeaderError, match="version"):
            read_mdf(bad)

    def test_empty_file(self, tmp_path):
        bad = tmp_path / "empty.mdf"
        bad.write_bytes(b"")
        with pytest.raises(MdfError):
            read_mdf(bad)


class TestKeypointFiles:
    def test_basic_parse(self, tmp_path):
        path = tmp_path / "kp.csv"
        path.write_text("1.5,2,3\n")
        kps = read_keypoints(path)
        assert np.array_equal(kps.points, [[1.5, 2.0, 3.0]])

    def test_empty_file_is_empty_set(self, tmp_path):
        path = tmp_path / "kp.csv"
        path.write_text("")
        assert len(read_keypoints(path)) == 0

    def test_wrong_arity_names_line(self, tmp_path):
        path = tmp_path / "kp.csv"
        path.write_text("1,2\n")
        with pytest.raises(KeypointFormatError, match="line 1"):
            read_keypoints(path)

    def test_nan_rejected(self, tmp_path):
        path = tmp_path / "kp.csv"
        path.write_text("1,2,3\nnan,0,0\n")
        with pytest.raises(KeypointFormatError, match="line 2"):
            read_keypoints(path)

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        kps = KeypointSet(rng.uniform(-5, 100, size=(17, 3)))
        path = tmp_path / "kp.csv"
        write_keypoints(kps, path)
        back = read_keypoints(path)
        assert np.array_equal(back.points, kps.points)


class TestRawVolume:
    def test_zero_volume(self, tmp_path):
        vol = Volume3D(np.zeros((2, 2, 2), np.float32))
        write_raw_volume(vol, tmp_path / "v.raw", tmp_path / "v.txt")
        back = read_raw_volume(tmp_path / "v.raw", tmp_path / "v.txt")
        assert back.dims == (2, 2, 2)
        assert np.array_equal(back.data, vol.data)

    def test_size_mismatch(self, tmp_path):
        (tmp_path / "v.raw").write_bytes(b"\x00" * (8 * 4))
        (tmp_path / "v.txt").write_text("dims: 3,3,3\nspacing: 1,1,1\n")
        with pytest.raises(VolumeFormatError, match="size mismatch"):
            read_raw_volume(tmp_path / "v.raw", tmp_path / "v.txt")

    def test_round_trip_random(self, tmp_path):
        rng = np.random.default_rng(6)
        vol = Volume3D(
            rng.standard_normal((3, 4, 5)).astype(np.float32),
            spacing=(0.5, 1.25, 2.0),
            origin=(-1.0, 3.5, 0.0),
        )
        write_raw_volume(vol, tmp_path / "v.raw", tmp_path / "v.txt")
        back = read_raw_volume(tmp_path / "v.raw", tmp_path / "v.txt")
        assert np.array_equal(back.data.view(np.uint32), vol.data.view(np.uint32))
        assert back.spacing == vol.spacing and back.origin == vol.origin

    def test_non_positive_spacing_rejected(self, tmp_path):
        (tmp_path / "v.raw").write_bytes(b"\x00" * 4)
        (tmp_path / "v.txt").write_text("dims: 1,1,1\nspacing: 1,-1,1\n")
        with pytest.raises(VolumeFormatError, match="spacing"):
            read_raw_volume(tmp_path / "v.raw", tmp_path / "v.txt")


class TestReport:
    def test_deterministic_bytes(self, tmp_path):
        payload = {"b": 2.0, "a": [1, 2, 3], "config": {"t": 20}}
        p1, p2 = tmp_path / "r1.json", tmp_path / "r2.json"
        write_report(payload, p1)
        write_report(dict(reversed(payload.items())), p2)
        assert p1.read_bytes() == p2.read_bytes()
        parsed = json.loads(p1.read_text())
        assert parsed["format_version"] == 1
