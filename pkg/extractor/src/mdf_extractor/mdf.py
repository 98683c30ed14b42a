"""MDF container writer (see FORMATS.md at the engine repository root).

Kept independent of the engine package on purpose: the byte layout is the
contract between the two sides.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"MDF1"
VERSION = 1
_HEAD = struct.Struct("<HHHIII")
_LEVEL = struct.Struct("<HIIII")


def write_mdf(levels, timestep: int, target_dims, path) -> None:
    """Write levels as an MDF file atomically (temp file + rename).

    ``levels`` is an ordered list of ``(level_id, array)`` with arrays of
    shape (C, nz, ny, nx) float32; ids must be strictly increasing.
    """
    ids = [lid for lid, _ in levels]
    if ids != sorted(set(ids)) or not ids:
        raise ValueError(f"level ids must be strictly increasing and non-empty, got {ids}")
    tx, ty, tz = (int(v) for v in target_dims)
    parts = [MAGIC, _HEAD.pack(VERSION, timestep, len(levels), tx, ty, tz)]
    for lid, arr in levels:
        c, nz, ny, nx = arr.shape
        parts.append(_LEVEL.pack(lid, c, nx, ny, nz))
    for _, arr in levels:
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)
