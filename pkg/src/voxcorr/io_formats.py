"""Bit-exact file formats: feature containers, raw volumes, keypoints, reports.

All binary payloads are little-endian 32-bit reals regardless of host. The
layouts are normative and documented in FORMATS.md at the repository root.
Readers validate header-declared sizes against the actual file length before
allocating anything, so malformed headers cannot trigger over-allocation.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .descriptor import FeatureLevel, FeatureSet
from .errors import (
    KeypointFormatError,
    MdfHeaderError,
    MdfMagicError,
    MdfTruncatedError,
    VolumeFormatError,
)
from .volume import KeypointSet, Volume3D

MDF_MAGIC = b"MDF1"
MDF_VERSION = 1
_HEAD = struct.Struct("<HHHIII")  # version, timestep, level count, target nx, ny, nz
_LEVEL = struct.Struct("<HIIII")  # level_id, C, nx, ny, nz

REPORT_FORMAT_VERSION = 1


def write_mdf(fs: FeatureSet, path) -> None:
    """Serialize a FeatureSet; payloads are channel-major then z, y, x."""
    target = fs.target_dims if fs.target_dims is not None else (0, 0, 0)
    parts = [MDF_MAGIC, _HEAD.pack(MDF_VERSION, fs.timestep, len(fs.levels), *target)]
    for lv in fs.levels:
        nx, ny, nz = lv.dims
        parts.append(_LEVEL.pack(lv.level_id, lv.channels, nx, ny, nz))
    for lv in fs.levels:
        parts.append(np.ascontiguousarray(lv.data, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_mdf(path) -> FeatureSet:
    """Parse and validate an MDF file; raises a distinct MdfError per defect."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != MDF_MAGIC:
        raise MdfMagicError(f"{path}: bad magic {raw[:4]!r} at offset 0 (expected {MDF_MAGIC!r})")
    if len(raw) < 4 + _HEAD.size:
        raise MdfTruncatedError(
            f"{path}: header truncated: need {4 + _HEAD.size} bytes, file has {len(raw)}"
        )
    version, timestep, n_levels, tx, ty, tz = _HEAD.unpack_from(raw, 4)
    if version != MDF_VERSION:
        raise MdfHeaderError(f"{path}: unsupported version {version} (expected {MDF_VERSION})")
    if n_levels < 1:
        raise MdfHeaderError(f"{path}: level count field is {n_levels}, need >= 1")
    target = (tx, ty, tz)
    if target == (0, 0, 0):
        target = None
    elif min(target) < 1:
        raise MdfHeaderError(f"{path}: target dims field {target} mixes zero and nonzero")

    headers_end = 4 + _HEAD.size + n_levels * _LEVEL.size
    if len(raw) < headers_end:
        raise MdfTruncatedError(
            f"{path}: level headers truncated: need {headers_end} bytes, file has {len(raw)}"
        )
    headers = []
    expected = headers_end  # running payload offset, Python ints so no overflow
    prev_id = -1
    for k in range(n_levels):
        level_id, c, nx, ny, nz = _LEVEL.unpack_from(raw, 4 + _HEAD.size + k * _LEVEL.size)
        if level_id <= prev_id:
            raise MdfHeaderError(
                f"{path}: level ids must be strictly increasing;"
                f" header {k} has id {level_id} after {prev_id}"
            )
        prev_id = level_id
        if min(c, nx, ny, nz) < 1:
            raise MdfHeaderError(
                f"{path}: header {k} (level {level_id}) has zero field in C/dims"
                f" ({c}, {nx}, {ny}, {nz})"
            )
        nbytes = 4 * c * nx * ny * nz
        headers.append((level_id, c, nx, ny, nz, expected, nbytes))
        expected += nbytes
    if expected > len(raw):
        raise MdfTruncatedError(
            f"{path}: payload truncated: headers require {expected} bytes, file has {len(raw)}"
        )
    if expected < len(raw):
        raise MdfHeaderError(
            f"{path}: {len(raw) - expected} trailing bytes past the declared payload"
        )

    levels = []
    for level_id, c, nx, ny, nz, offset, nbytes in headers:
        flat = np.frombuffer(raw, dtype="<f4", count=nbytes // 4, offset=offset)
        levels.append(FeatureLevel(level_id, flat.reshape(c, nz, ny, nx).copy()))
    return FeatureSet(levels=levels, timestep=timestep, target_dims=target)


def read_keypoints(path, frame: str = "A") -> KeypointSet:
    """One "x,y,z" triple per line; an empty file is a valid empty set."""
    points = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            parts = s.split(",")
            if len(parts) != 3:
                raise KeypointFormatError(
                    f"{path}: line {lineno}: expected 'x,y,z', got {s!r}"
                )
            try:
                triple = [float(p) for p in parts]
            except ValueError:
                raise KeypointFormatError(
                    f"{path}: line {lineno}: not three numbers: {s!r}"
                ) from None
            if not all(np.isfinite(triple)):
                raise KeypointFormatError(
                    f"{path}: line {lineno}: non-finite coordinate: {s!r}"
                )
            points.append(triple)
    return KeypointSet(np.asarray(points, dtype=np.float64).reshape(-1, 3), frame=frame)


def write_keypoints(kps: KeypointSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in kps.points:
            fh.write(f"{float(x)!r},{float(y)!r},{float(z)!r}\n")


def write_report(payload: dict, path) -> None:
    """Deterministic JSON report (sorted keys, trailing newline)."""
    payload = dict(payload)
    payload.setdefault("format_version", REPORT_FORMAT_VERSION)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_sidecar(sidecar_path) -> dict:
    fields = {}
    with open(sidecar_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            if ":" not in s:
                raise VolumeFormatError(f"{sidecar_path}: line {lineno}: expected 'key: values'")
            key, _, rest = s.partition(":")
            fields[key.strip()] = [p.strip() for p in rest.split(",")]
    return fields


def read_raw_volume(data_path, sidecar_path) -> Volume3D:
    """Raw little-endian float32 voxels (x fastest) plus a text descriptor."""
    fields = _parse_sidecar(sidecar_path)
    if "dims" not in fields:
        raise VolumeFormatError(f"{sidecar_path}: missing 'dims'")
    try:
        dims = tuple(int(v) for v in fields["dims"])
        spacing = tuple(float(v) for v in fields.get("spacing", ["1", "1", "1"]))
        origin = tuple(float(v) for v in fields.get("origin", ["0", "0", "0"]))
    except ValueError as exc:
        raise VolumeFormatError(f"{sidecar_path}: {exc}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise VolumeFormatError(f"{sidecar_path}: dims must be three positive counts, got {dims}")
    if len(spacing) != 3 or any(s <= 0 for s in spacing):
        raise VolumeFormatError(f"{sidecar_path}: spacing must be positive, got {spacing}")
    nx, ny, nz = dims
    with open(data_path, "rb") as fh:
        raw = fh.read()
    expected = 4 * nx * ny * nz
    if len(raw) != expected:
        raise VolumeFormatError(
            f"{data_path}: size mismatch: sidecar dims {dims} require {expected} bytes,"
            f" file has {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(nz, ny, nx).copy()
    return Volume3D(data, spacing, origin)


def write_raw_volume(vol: Volume3D, data_path, sidecar_path) -> None:
    with open(data_path, "wb") as fh:
        fh.write(np.ascontiguousarray(vol.data, dtype="<f4").tobytes())
    nx, ny, nz = vol.dims
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        fh.write(f"dims: {nx},{ny},{nz}\n")
        fh.write("spacing: " + ",".join(repr(float(s)) for s in vol.spacing) + "\n")
        fh.write("origin: " + ",".join(repr(float(o)) for o in vol.origin) + "\n")
