"""Fused per-voxel descriptors from multi-scale feature volumes.

Each selected level is trilinearly upsampled to the image grid, L2-normalized
per voxel, and concatenated in ascending level order. Materializing that field
at full resolution can run to tens of GiB, so the default path is a lazy
sampler: a point query maps the image coordinate into each level's native grid
(half-pixel-center convention), interpolates the level's channels there, and
normalizes the segment. The two paths are interchangeable; ``fuse`` exists for
small grids and for cross-checking the sampler.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MemoryBudgetError
from .volume import Dims, map_half_pixel, trilinear_values

NORM_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class FeatureLevel:
    """One decoder level's activation tensor; data shape (C, nz, ny, nx)."""

    level_id: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 4 or min(data.shape) < 1:
            raise ValueError(f"level data must be (C, nz, ny, nx), got shape {data.shape}")
        object.__setattr__(self, "data", data)
        if self.level_id < 0:
            raise ValueError(f"level_id must be >= 0, got {self.level_id}")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> Dims:
        _, nz, ny, nx = self.data.shape
        return (nx, ny, nz)


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Ordered levels extracted at one timestep for one image.

    ``target_dims`` is the image grid the descriptors live on; it is None for
    sets read from containers written without one, and must be supplied
    before sampling.
    """

    levels: list[FeatureLevel]
    timestep: int
    target_dims: Dims | None = None

    def __post_init__(self):
        if not self.levels:
            raise ValueError("a feature set needs at least one level")
        ids = [lv.level_id for lv in self.levels]
        if len(set(ids)) != len(ids):
            raise ValueError(f"level ids must be unique, got {ids}")
        if ids != sorted(ids):
            raise ValueError(f"levels must be sorted by level_id, got {ids}")
        if self.target_dims is not None:
            dims = tuple(int(n) for n in self.target_dims)
            if len(dims) != 3 or any(n < 1 for n in dims):
                raise ValueError(f"target_dims must be three positive counts, got {dims!r}")
            object.__setattr__(self, "target_dims", dims)

    @property
    def level_ids(self) -> list[int]:
        return [lv.level_id for lv in self.levels]

    def level_by_id(self, level_id: int) -> FeatureLevel:
        for lv in self.levels:
            if lv.level_id == level_id:
                return lv
        raise KeyError(f"no level with id {level_id}; available: {self.level_ids}")

    def with_target_dims(self, dims: Dims) -> "FeatureSet":
        return FeatureSet(self.levels, self.timestep, dims)


def upsample_level(level: FeatureLevel, target_dims: Dims) -> FeatureLevel:
    """Resample every channel onto the target grid (shared trilinear kernel)."""
    mx, my, mz = (int(n) for n in target_dims)
    if min(mx, my, mz) < 1:
        raise ValueError(f"target dims must be positive, got {target_dims!r}")
    nx, ny, nz = level.dims
    if (mx, my, mz) == (nx, ny, nz):
        return FeatureLevel(level.level_id, level.data.copy())

    xs = map_half_pixel(np.arange(mx), mx, nx)
    ys = map_half_pixel(np.arange(my), my, ny)
    zs = map_half_pixel(np.arange(mz), mz, nz)
    out = np.empty((level.channels, mz, my, mx), dtype=np.float32)
    slab = max(1, (1 << 21) // max(1, mx * my))
    for z_start in range(0, mz, slab):
        z_stop = min(mz, z_start + slab)
        zc, yc, xc = np.meshgrid(zs[z_start:z_stop], ys, xs, indexing="ij")
        coords = np.stack([xc.ravel(), yc.ravel(), zc.ravel()], axis=1)
        vals = trilinear_values(level.data, coords)  # (C, n)
        out[:, z_start:z_stop] = vals.reshape(-1, z_stop - z_start, my, mx).astype(np.float32)
    return FeatureLevel(level.level_id, out)


def normalize_l2(vec: np.ndarray) -> np.ndarray:
    """vec / ||vec||_2, or the zero vector when the norm is below 1e-12."""
    vec = np.asarray(vec, dtype=np.float64)
    norm = float(np.sqrt(np.dot(vec.ravel(), vec.ravel())))
    if norm <= NORM_EPS:
        return np.zeros_like(vec)
    return vec / norm


def _normalize_segments(vals: np.ndarray) -> np.ndarray:
    """Per-column L2 normalization of a (C, N) float64 block."""
    norms = np.sqrt(np.einsum("cn,cn->n", vals, vals))
    out = np.zeros_like(vals)
    np.divide(vals, norms[None, :], out=out, where=norms[None, :] > NORM_EPS)
    return out


def _resolve_level_ids(fs: FeatureSet, level_ids) -> list[int]:
    if level_ids is None:
        return fs.level_ids
    ids = sorted(int(i) for i in level_ids)
    if not ids:
        raise ValueError("at least one level must be selected")
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate level ids in selection: {level_ids!r}")
    missing = [i for i in ids if i not in fs.level_ids]
    if missing:
        raise ValueError(f"levels {missing} not in feature set (available: {fs.level_ids})")
    return ids


def fuse(fs: FeatureSet, level_ids=None, max_bytes: int = 1 << 30) -> np.ndarray:
    """Materialize the fused descriptor field, shape (sum C_l, nz, ny, nx).

    Refuses to allocate past ``max_bytes`` (use a DescriptorSampler instead;
    lazy sampling is the engine's default path for full-size grids).
    """
    if fs.target_dims is None:
        raise ValueError("feature set has no target_dims; call with_target_dims first")
    ids = _resolve_level_ids(fs, level_ids)
    mx, my, mz = fs.target_dims
    total_c = sum(fs.level_by_id(i).channels for i in ids)
    need = total_c * mx * my * mz * 4
    if need > max_bytes:
        raise MemoryBudgetError(
            f"materializing {total_c}x{mz}x{my}x{mx} needs {need} bytes"
            f" (cap {max_bytes}); sample lazily via DescriptorSampler instead"
        )
    out = np.empty((total_c, mz, my, mx), dtype=np.float32)
    row = 0
    for i in ids:
        up = upsample_level(fs.level_by_id(i), fs.target_dims).data
        norms = np.sqrt(np.einsum("czyx,czyx->zyx", up, up, dtype=np.float64))
        seg = np.zeros_like(up)
        np.divide(up, norms[None], out=seg, where=norms[None] > NORM_EPS)
        out[row : row + up.shape[0]] = seg
        row += up.shape[0]
    return out


class DescriptorSampler:
    """Read-only lazy view of the fused descriptor field.

    Construction selects the levels; ``sample`` evaluates descriptors at
    arbitrary continuous image-grid coordinates. Safe for concurrent use.
    """

    def __init__(self, fs: FeatureSet, level_ids=None, target_dims: Dims | None = None):
        dims = target_dims if target_dims is not None else fs.target_dims
        if dims is None:
            raise ValueError("target_dims required: pass explicitly or set on the feature set")
        self.target_dims: Dims = tuple(int(n) for n in dims)
        self.level_ids = _resolve_level_ids(fs, level_ids)
        self._levels = [fs.level_by_id(i) for i in self.level_ids]
        self.timestep = fs.timestep
        self.descriptor_length = sum(lv.channels for lv in self._levels)

    def sample(self, coords) -> np.ndarray:
        """Descriptors at (N, 3) continuous coordinates; returns (N, C) float32."""
        coords = np.asarray(coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ValueError(f"coords must be (N, 3), got shape {coords.shape}")
        n = coords.shape[0]
        out = np.empty((n, self.descriptor_length), dtype=np.float32)
        if n == 0:
            return out
        row = 0
        for lv in self._levels:
            mapped = np.empty_like(coords)
            for axis in range(3):
                mapped[:, axis] = map_half_pixel(
                    coords[:, axis], self.target_dims[axis], lv.dims[axis]
                )
            vals = trilinear_values(lv.data, mapped)  # (C, N) float64
            out[:, row : row + lv.channels] = _normalize_segments(vals).T.astype(np.float32)
            row += lv.channels
        return out

    def sample_one(self, coord) -> np.ndarray:
        """Descriptor at a single (x, y, z) coordinate; returns (C,) float32."""
        coord = np.asarray(coord, dtype=np.float64).reshape(1, 3)
        return self.sample(coord)[0]


def sample_descriptor(ds: DescriptorSampler, coord) -> np.ndarray:
    """Functional form of DescriptorSampler.sample_one."""
    return ds.sample_one(coord)
